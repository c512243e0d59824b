#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

#include "bricklayers/cli.hpp"

using namespace bricklayers;
namespace fs = std::filesystem;

namespace
{

struct Run
{
	int code;
	std::string out, err;
};

Run cli(const std::vector<std::string>& args)
{
	std::ostringstream out, err;
	const int code = run_cli(args, out, err);
	return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name)
{
	const fs::path p = fs::temp_directory_path() / ("bricklayers_cli_test_" + name);
	fs::remove_all(p);
	fs::create_directories(p);
	return p;
}

std::string slurp(const fs::path& p)
{
	std::ifstream is(p, std::ios::binary);
	std::ostringstream ss;
	ss << is.rdbuf();
	return ss.str();
}

// Runs the installed binary; returns its exit status.
int spawn(const std::string& args)
{
	const char* exe = std::getenv("BRICKLAYERS_CLI");
	REQUIRE(exe != nullptr);
	const int status = std::system((std::string(exe) + " " + args + " > /dev/null 2>&1").c_str());
	return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}

TEST_CASE("verify-theorem finds the ebl pair")
{
	const fs::path dir = scratch("theorem");
	const Run r = cli({"verify-theorem", "--beta", "1", "--grid", "41", "--output-dir", dir.string()});
	CHECK(r.code == kExitOk);
	CHECK(r.out.find("verdict: EBL pair found at theta_l-theta_r=1.00") != std::string::npos);
	const auto summary = nlohmann::json::parse(slurp(dir / "verify-theorem_summary.json"));
	CHECK(summary.at("pass").get<bool>());
	CHECK(summary.at("inputs").at("grid").get<int>() == 41);
	CHECK(fs::exists(dir / "theorem_scan.csv"));
	CHECK(fs::exists(dir / "diagonal_scan.csv"));
}

TEST_CASE("shock runs are byte-identical")
{
	const fs::path a = scratch("shock_a"), b = scratch("shock_b");
	const std::vector<std::string> base{"shock", "--beta", "1", "--theta-left", "1", "--theta-right", "0", "--seed", "7"};
	auto with_dir = [&](const fs::path& d) {
		auto args = base;
		args.push_back("--output-dir");
		args.push_back(d.string());
		return args;
	};
	const Run ra = cli(with_dir(a));
	const Run rb = cli(with_dir(b));
	CHECK(ra.code == rb.code);
	CHECK(ra.code != kExitConfig);
	int files = 0;
	for (const auto& entry : fs::directory_iterator(a)) {
		const fs::path other = b / entry.path().filename();
		REQUIRE(fs::exists(other));
		std::string x = slurp(entry.path()), y = slurp(other);
		// the summary echoes the output directory
		if (entry.path().filename() == "shock_summary.json") {
			auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
			jx["inputs"].erase("output_dir");
			jy["inputs"].erase("output_dir");
			x = jx.dump();
			y = jy.dump();
		}
		CHECK(x == y);
		++files;
	}
	CHECK(files >= 3);
}

TEST_CASE("configuration errors exit with code 2 and name the field")
{
	const Run missing = cli({"marginal", "--theta", "0.5"});
	CHECK(missing.code == kExitConfig);
	CHECK(missing.err.find("rate") != std::string::npos);

	const Run no_seed = cli({"shock", "--beta", "1"});
	CHECK(no_seed.code == kExitConfig);
	CHECK(no_seed.err.find("seed") != std::string::npos);

	CHECK(cli({"shock", "--beta", "1", "--bogus"}).code == kExitConfig);
	CHECK(cli({"nonsense"}).code == kExitConfig);
	CHECK(cli({}).code == kExitConfig);
	CHECK(cli({"marginal", "--beta", "-1"}).code == kExitConfig);

	const fs::path dir = scratch("config");
	std::ofstream(dir / "bad.json") << R"({"rate": {"kind": "ebl", "beta": 1}, "lattice": 5})";
	const Run unknown = cli({"marginal", "--config", (dir / "bad.json").string()});
	CHECK(unknown.code == kExitConfig);
	CHECK(unknown.err.find("lattice") != std::string::npos);

	std::ofstream(dir / "rate.json") << R"({"kind": "tabulated", "table": [[1, 0.5]]})";
	const Run rate = cli({"marginal", "--rate", (dir / "rate.json").string()});
	CHECK(rate.code == kExitConfig);
	CHECK(rate.err.find("rate") != std::string::npos);
}

TEST_CASE("config file, rate file and output directory precedence")
{
	const fs::path dir = scratch("files");
	std::ofstream(dir / "rate.json") << R"({"kind": "ebl", "beta": 2.0})";
	std::ofstream(dir / "cfg.json") << R"({"theta": 0.25, "output_dir": ")" + (dir / "from_config").string() + "\"}";
	const Run r = cli({"marginal", "--config", (dir / "cfg.json").string(), "--rate", (dir / "rate.json").string()});
	CHECK(r.code == kExitOk);
	const auto summary = nlohmann::json::parse(slurp(dir / "from_config" / "marginal_summary.json"));
	CHECK(summary.at("inputs").at("theta").get<double>() == 0.25);
	CHECK(summary.at("inputs").at("rate").at("beta").get<double>() == 2.0);
	CHECK(fs::exists(dir / "from_config" / "marginal.csv"));

	const Run flag = cli({"marginal", "--config", (dir / "cfg.json").string(), "--beta", "1", "--output-dir",
	                      (dir / "from_flag").string()});
	CHECK(flag.code == kExitOk);
	CHECK(fs::exists(dir / "from_flag" / "marginal_summary.json"));

	::setenv(kOutputDirEnv, (dir / "from_env").string().c_str(), 1);
	CHECK(cli({"convexity", "--beta", "1"}).code == kExitOk);
	::unsetenv(kOutputDirEnv);
	CHECK(fs::exists(dir / "from_env" / "convexity_summary.json"));
	CHECK(fs::exists(dir / "from_env" / "convexity.csv"));
}

TEST_CASE("the binary reports exit codes")
{
	const fs::path dir = scratch("binary");
	CHECK(spawn("--help") == kExitOk);
	CHECK(spawn("marginal --theta 0.1 --output-dir " + dir.string()) == kExitConfig);
	CHECK(spawn("marginal --beta 1 --theta 0.1 --output-dir " + dir.string()) == kExitOk);
	CHECK(spawn("verify-stationary --beta 1 --output-dir " + dir.string()) == kExitOk);
}
