#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "dpn/io.hpp"
#include "dpn/series_io.hpp"
#include "dpn/smooth.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace dpn;
namespace fs = std::filesystem;

namespace {

const std::string kCli = DPN_CLI_PATH;
const std::string kSamples = DPN_SAMPLES_DIR;

struct RunResult {
  int code;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  std::string cmd = kCli + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path temp_file(const std::string& name, const std::string& content) {
  fs::path p = fs::temp_directory_path() / ("dpn_io_test_" + name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::vector<nlohmann::json> lines(const std::string& out) {
  std::vector<nlohmann::json> v;
  std::istringstream in(out);
  std::string l;
  while (std::getline(in, l))
    if (!l.empty()) v.push_back(nlohmann::json::parse(l));
  return v;
}

ModelSeries sample_series() {
  auto m = std::make_shared<const DpnModel>(load_model(kSamples + "/weather.json"));
  auto s = ModelSeries::init(m, 2);
  auto ev = load_evidence(*m, kSamples + "/weather_evidence.jsonl");
  for (std::size_t t = 0; t <= 5; ++t) {
    while (t > s.window().t_high()) {
      s.propagate();
      s.advance(1);
    }
    for (const auto& e : ev)
      if (e.t == t) s.enter_evidence(e);
  }
  s.propagate();
  smooth_to(s, 2);
  return s;
}

}  // namespace

TEST(Io, SampleModelParsesAndValidates) {
  auto m = load_model(kSamples + "/hmm.json");
  EXPECT_TRUE(validate_model(m).empty());
  auto ref = oracle::make_hmm();
  EXPECT_EQ(m.transition.slice.cpts[0].parents, ref->transition.slice.cpts[0].parents);
  EXPECT_EQ(m.transition.slice.cpts[0].table, ref->transition.slice.cpts[0].table);
  auto w = load_model(kSamples + "/weather.json");
  EXPECT_TRUE(validate_model(w).empty());
}

TEST(Io, MalformedModelReportsPosition) {
  try {
    parse_model("{\"variables\": [}");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("column"), std::string::npos);
  }
  EXPECT_THROW(parse_model("[]"), FormatError);
  EXPECT_THROW(parse_model(R"({"variables":[{"name":"x","states":["a"]}],"initial":{"cpts":{"z":[1]}},"transition":{"cpts":{}}})"),
               FormatError);
}

TEST(Io, EvidenceErrorsCarryLineNumbers) {
  auto m = load_model(kSamples + "/hmm.json");
  auto ok = parse_evidence(m, "{\"t\":0,\"var\":\"y\",\"state\":\"o1\"}\n\n{\"t\":1,\"var\":\"x\",\"likelihood\":[1,2]}\n");
  ASSERT_EQ(ok.size(), 2u);
  EXPECT_FALSE(ok[1].finding.hard);
  try {
    parse_evidence(m, "{\"t\":0,\"var\":\"y\",\"state\":\"o1\"}\n{\"t\":1,\"var\":\"y\",\"state\":\"o7\"}\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_evidence(m, "{\"t\":-1,\"var\":\"y\",\"state\":\"o1\"}"), FormatError);
  EXPECT_THROW(parse_evidence(m, "{\"t\":0,\"var\":\"y\",\"likelihood\":[0,0]}"), FormatError);
}

TEST(Io, SeriesRoundTripIsBitExact) {
  auto s = sample_series();
  std::string bytes = serialize_series(s);
  auto r = deserialize_series(bytes);
  EXPECT_EQ(serialize_series(r), bytes);
  EXPECT_EQ(r.model_count(), s.model_count());
  for (std::size_t t = 0; t <= s.window().t_high(); ++t)
    for (VarId v = 0; v < s.model().var_count(); ++v)
      EXPECT_EQ(query_smoothed(s, t, v).values(), query_smoothed(r, t, v).values());
}

TEST(Io, SeriesCorruptionDetected) {
  std::string bytes = serialize_series(sample_series());
  try {
    deserialize_series(bytes.substr(0, bytes.size() - 9));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
  std::string flipped = bytes;
  flipped[40] ^= 0x1;
  EXPECT_THROW(deserialize_series(flipped), FormatError);
  std::string old = bytes;
  old[8] = 0;  // major version 0
  try {
    deserialize_series(old);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(deserialize_series("not a series"), FormatError);
}

TEST(Io, SaveToMissingDirectoryIsIoError) {
  EXPECT_THROW(save_series(sample_series(), "/nonexistent/dir/x.dpns"), IoError);
  EXPECT_THROW(load_series("/nonexistent/x.dpns"), IoError);
}

TEST(Cli, ValidateExitCodes) {
  EXPECT_EQ(run_cli("validate " + kSamples + "/hmm.json").code, 0);
  auto bad = temp_file("bad.json", R"({"variables":[{"name":"x","states":["a","b"]}],
    "initial":{"cpts":{"x":[0.5,0.6]}},
    "transition":{"temporal_edges":[["x","x"]],"cpts":{"x":[0.5,0.5,0.5,0.5]}}})");
  auto r = run_cli("validate " + bad.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("sums to"), std::string::npos);
  auto malformed = temp_file("malformed.json", "{\"variables\": ");
  EXPECT_EQ(run_cli("validate " + malformed.string()).code, 1);
  EXPECT_EQ(run_cli("validate /nonexistent/model.json").code, 3);
}

TEST(Cli, FilterMatchesForwardAlgorithm) {
  auto r = run_cli("filter " + kSamples + "/hmm.json " + kSamples + "/hmm_evidence.jsonl --width 2");
  ASSERT_EQ(r.code, 0);
  std::vector<int> y{0, 0, 1, 0, 1, 1, 1, 0, 0, 1};
  auto ref = oracle::hmm_forward(y);
  std::size_t checked = 0;
  for (const auto& rec : lines(r.out)) {
    EXPECT_EQ(rec["mode"], "filtered");
    double sum = 0.0;
    for (const auto& d : rec["distribution"]) sum += d["p"].get<double>();
    EXPECT_NEAR(sum, 1.0, 1e-9);
    if (rec["var"] == "x") {
      std::size_t t = rec["t"];
      EXPECT_NEAR(rec["distribution"][0]["p"].get<double>(), ref[t][0], 1e-10);
      ++checked;
    }
  }
  EXPECT_EQ(checked, y.size());
}

TEST(Cli, EmptyEvidenceGivesPriorMarginals) {
  auto empty = temp_file("empty.jsonl", "");
  auto r = run_cli("filter " + kSamples + "/hmm.json " + empty.string() + " --slices 3");
  ASSERT_EQ(r.code, 0);
  auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 6u);
  EXPECT_NEAR(recs[4]["distribution"][0]["p"].get<double>(), 0.5, 1e-15);
  EXPECT_NEAR(recs[5]["distribution"][0]["p"].get<double>(), 0.55, 1e-15);
}

TEST(Cli, ArchivedEvidenceRejected) {
  auto ev = temp_file("late.jsonl", "{\"t\":4,\"var\":\"y\",\"state\":\"o1\"}\n{\"t\":1,\"var\":\"y\",\"state\":\"o0\"}\n");
  auto r = run_cli("filter " + kSamples + "/hmm.json " + ev.string() + " --width 2");
  EXPECT_EQ(r.code, 2);
  std::string cmd = kCli + " filter " + kSamples + "/hmm.json " + ev.string() + " --width 2 2>&1 >/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  char buf[1024] = {};
  std::size_t n = fread(buf, 1, sizeof buf - 1, p);
  pclose(p);
  std::string err(buf, n);
  EXPECT_NE(err.find("slice 1"), std::string::npos);
  EXPECT_NE(err.find("smoothing"), std::string::npos);
}

TEST(Cli, ContradictoryEvidenceIsInferenceError) {
  auto model = temp_file("det.json", R"({"variables":[{"name":"x","states":["a","b"]},{"name":"y","states":["a","b"]}],
    "initial":{"edges":[["y","x"]],"cpts":{"x":[1,0],"y":[1,0,0,1]}},
    "transition":{"edges":[["y","x"]],"temporal_edges":[["x","x"]],"cpts":{"x":[1,0,0,1],"y":[1,0,0,1]}}})");
  auto ev = temp_file("contra.jsonl", "{\"t\":1,\"var\":\"y\",\"state\":\"b\"}\n");
  EXPECT_EQ(run_cli("filter " + model.string() + " " + ev.string()).code, 2);
}

TEST(Cli, SmoothTargetsAndDefaults) {
  const std::string base = "smooth " + kSamples + "/hmm.json " + kSamples + "/hmm_evidence.jsonl --width 2";
  auto r = run_cli(base + " --targets 0:x");
  ASSERT_EQ(r.code, 0);
  auto recs = lines(r.out);
  ASSERT_EQ(recs.size(), 1u);
  auto ref = oracle::hmm_forward_backward({0, 0, 1, 0, 1, 1, 1, 0, 0, 1});
  EXPECT_NEAR(recs[0]["distribution"][0]["p"].get<double>(), ref[0][0], 1e-10);
  EXPECT_EQ(lines(run_cli(base).out).size(), 20u);
  EXPECT_EQ(run_cli(base + " --targets 0:nope").code, 1);
  auto filtered = lines(run_cli("filter " + kSamples + "/hmm.json " + kSamples + "/hmm_evidence.jsonl --width 2").out);
  auto last = lines(run_cli(base + " --targets 9:x").out);
  EXPECT_EQ(last[0]["distribution"], filtered[18]["distribution"]);
}

TEST(Cli, ForecastMethodsAndErrors) {
  const std::string base = "forecast " + kSamples + "/weather.json " + kSamples + "/weather_evidence.jsonl";
  auto mc1 = run_cli(base + " --horizon 2 --method mc --samples 2000 --seed 9");
  auto mc2 = run_cli(base + " --horizon 2 --method mc --samples 2000 --seed 9");
  ASSERT_EQ(mc1.code, 0);
  EXPECT_EQ(mc1.out, mc2.out);
  auto rec = lines(mc1.out).front();
  EXPECT_EQ(rec["mode"], "forecast:mc");
  EXPECT_EQ(rec["generator"], "splitmix64-counter/1");
  EXPECT_EQ(rec["seed"], 9);
  EXPECT_EQ(run_cli(base + " --method guess").code, 1);
  auto capped = run_cli("forecast " + kSamples + "/weather.json " + kSamples +
                        "/weather_evidence.jsonl --horizon 30 --method exact");
  EXPECT_EQ(capped.code, 0);
  std::string cmd = "DPN_RESOURCE_CAP=200 " + kCli + " " + base + " --horizon 6 >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST(Cli, CsvFormat) {
  auto r = run_cli("filter " + kSamples + "/hmm.json " + kSamples + "/hmm_evidence.jsonl --format csv");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "t,var,mode,state,p,evidence_mass,std_error");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 10 * 2 * 2);
}

TEST(Cli, SaveAndLoadSeries) {
  fs::path saved = fs::temp_directory_path() / "dpn_io_test_series.dpns";
  const std::string base = kSamples + "/weather.json " + kSamples + "/weather_evidence.jsonl";
  auto direct = run_cli("smooth " + base + " --save-series " + saved.string());
  ASSERT_EQ(direct.code, 0);
  auto loaded = run_cli("smooth --load-series " + saved.string());
  ASSERT_EQ(loaded.code, 0);
  EXPECT_EQ(direct.out, loaded.out);
  auto f1 = run_cli("forecast " + base + " --horizon 2");
  auto f2 = run_cli("forecast --load-series " + saved.string() + " --horizon 2");
  EXPECT_EQ(f1.out, f2.out);
  std::string bytes;
  {
    std::ifstream in(saved, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto cut = temp_file("cut.dpns", bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(run_cli("smooth --load-series " + cut.string()).code, 3);
}
