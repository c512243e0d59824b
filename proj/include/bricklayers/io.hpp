#ifndef BRICKLAYERS_IO_HPP
#define BRICKLAYERS_IO_HPP

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace bricklayers
{

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double x)
{
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.17g", x);
	return buf;
}

/// Comma-separated table with one `# {json}` header line and a column line.
class CsvWriter
{
public:
	CsvWriter(nlohmann::json header, std::vector<std::string> columns)
	    : header_(std::move(header)), columns_(std::move(columns))
	{
	}

	void row(const std::vector<double>& values)
	{
		if (values.size() != columns_.size())
			throw std::invalid_argument("CSV row width does not match the column list");
		rows_.push_back(values);
	}

	std::size_t size() const { return rows_.size(); }

	std::string str() const
	{
		std::string out = "# " + header_.dump() + "\n";
		for (std::size_t c = 0; c < columns_.size(); ++c) out += (c ? "," : "") + columns_[c];
		out += '\n';
		for (const auto& r : rows_) {
			for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + format_double(r[c]);
			out += '\n';
		}
		return out;
	}

	void write(const std::string& path) const { write_text(path, str()); }

	static void write_text(const std::string& path, const std::string& text)
	{
		std::ofstream os(path, std::ios::binary);
		if (!os)
			throw std::runtime_error("cannot open " + path + " for writing");
		os << text;
	}

private:
	nlohmann::json header_;
	std::vector<std::string> columns_;
	std::vector<std::vector<double>> rows_;
};

}

#endif
