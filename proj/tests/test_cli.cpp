#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support/test_support.hpp"

namespace {

using vicl::testing::read_file;
using vicl::testing::TempDir;
using vicl::testing::write_file;

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Result vicl_cli(const std::string& args, const TempDir& scratch, const std::string& env = "") {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const auto cmd = env + " " + quote(VICL_BINARY) + " " + args + " >" + quote(out.string()) + " 2>" +
                   quote(err.string());
  const int status = std::system(cmd.c_str());
  Result r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string without_timestamps(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("started_at");
    out += j.dump() + "\n";
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    manifest_ = vicl::testing::write_synthetic_dataset(data_.path());
    write_file(data_ / "demo.toml",
               "[run]\nmax_tests = 12\n\n[data]\nmanifest = manifest.jsonl\n\n"
               "[client]\nendpoint = mock:clustered+echo-label\n");
  }

  TempDir data_;
  TempDir scratch_;
  std::filesystem::path manifest_;
};

TEST_F(Cli, HelpListsEverySubcommandAndFlag) {
  const auto r = vicl_cli("--help", scratch_);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, read_file(vicl::testing::golden_dir() / "cli_help.txt"));
}

TEST_F(Cli, UnknownModeIsAUsageError) {
  const auto r = vicl_cli("run --mode bogus", scratch_);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("bogus"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, UnknownConfigKeyIsAUsageError) {
  write_file(data_ / "bad.toml", "[run]\nmood = vicl\n");
  const auto r = vicl_cli("run -c " + quote((data_ / "bad.toml").string()), scratch_);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingManifestIsADataError) {
  const auto r = vicl_cli("run --manifest " + quote((data_ / "absent.jsonl").string()) + " --endpoint mock:hash -o " + quote((data_ / "r.jsonl").string()),
                          scratch_);
  EXPECT_EQ(r.exit_code, 2) << r.err;
}

TEST_F(Cli, UnreachableEndpointIsATransportError) {
  const auto r = vicl_cli("build-index --manifest " + quote(manifest_.string()) +
                              " --index " + quote((data_ / "i.bin").string()) + " --set client.retries=0 --set client.timeout_ms=500",
                          scratch_, "VICL_ENDPOINT=http://127.0.0.1:1");
  EXPECT_EQ(r.exit_code, 3) << r.err;
}

TEST_F(Cli, AnalyzeFlowOnFixtureTrace) {
  const auto r = vicl_cli("analyze-flow --trace " + quote((vicl::testing::fixtures_dir() / "t1.json").string()),
                          scratch_);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer,s_wp,s_pq,s_vq,s_ww");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u);
}

TEST_F(Cli, RunWithConfigWritesResultsAndIsIdempotent) {
  const auto out = data_ / "results.jsonl";
  const auto args = "run --mode vicl --config " + quote((data_ / "demo.toml").string()) + " -o " + quote(out.string());
  auto r = vicl_cli(args, scratch_);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto first = read_file(out);
  std::istringstream in(first);
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  EXPECT_EQ(header.at("config").at("mode"), "vicl");
  EXPECT_EQ(header.at("config").at("max_tests"), 12);
  std::size_t records = 0;
  nlohmann::json last;
  while (std::getline(in, line)) {
    last = nlohmann::json::parse(line);
    if (last.at("type") == "record") ++records;
  }
  EXPECT_EQ(records, 12u);
  EXPECT_EQ(last.at("accuracy"), 1.0);

  r = vicl_cli(args, scratch_);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(without_timestamps(read_file(out)), without_timestamps(first));
}

TEST_F(Cli, FlagsOverrideConfigAndEnvironment) {
  const auto out = data_ / "results.jsonl";
  const auto r = vicl_cli("run --config " + quote((data_ / "demo.toml").string()) +
                              " --endpoint mock:clustered+echo-label --max-tests 3 -n 2 -o " + quote(out.string()),
                          scratch_, "VICL_ENDPOINT=http://127.0.0.1:1");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto header = nlohmann::json::parse(read_file(out).substr(0, read_file(out).find('\n')));
  EXPECT_EQ(header.at("config").at("max_tests"), 3);
  EXPECT_EQ(header.at("config").at("demo_count"), 2);
}

TEST_F(Cli, OtherSubcommandsAreIdempotent) {
  const auto cfg = " --config " + quote((data_ / "demo.toml").string());
  const std::vector<std::pair<std::string, std::filesystem::path>> cases = {
      {"build-index" + cfg + " --index " + quote((data_ / "index.bin").string()), data_ / "index.bin"},
      {"summarize" + cfg + " -o " + quote((data_ / "summaries.jsonl").string()), data_ / "summaries.jsonl"},
      {"retrieve" + cfg + " --max-tests 1000 --query class0_t0001 -o " + quote((data_ / "retrieve.json").string()),
       data_ / "retrieve.json"},
      {"sweep" + cfg + " --values 1,2 -o " + quote((data_ / "sweep.csv").string()), data_ / "sweep.csv"},
  };
  for (const auto& [args, output] : cases) {
    auto r = vicl_cli(args, scratch_);
    ASSERT_EQ(r.exit_code, 0) << args << "\n" << r.err;
    const auto first = read_file(output);
    EXPECT_FALSE(first.empty()) << args;
    r = vicl_cli(args, scratch_);
    ASSERT_EQ(r.exit_code, 0) << args << "\n" << r.err;
    EXPECT_EQ(read_file(output), first) << args;
  }
  EXPECT_EQ(read_file(data_ / "sweep.csv"), "setting,accuracy,n_correct,n_total\n1,1,12,12\n2,1,12,12\n");
}

TEST_F(Cli, UnlearnWritesSetsAndRecords) {
  const auto dir = data_ / "unlearn";
  const auto args = "unlearn --config " + quote((data_ / "demo.toml").string()) + " --max-tests 1000 --output-dir " +
                    quote(dir.string());
  auto r = vicl_cli(args, scratch_);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  const auto sets = read_file(dir / "sets.json");
  r = vicl_cli(args, scratch_);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(read_file(dir / "sets.json"), sets);
  EXPECT_EQ(nlohmann::json::parse(sets).at("spec").at("sublabels").size(), 5u);
  EXPECT_GE(names.size(), 3u);
}

TEST_F(Cli, VersionPrints) {
  const auto r = vicl_cli("--version", scratch_);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.out.empty());
}

}  // namespace
