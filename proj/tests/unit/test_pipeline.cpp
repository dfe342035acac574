#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fmasss/csv.hpp"
#include "fmasss/error.hpp"
#include "fmasss/pipeline.hpp"
#include "fmasss/sim.hpp"
#include "oracles.hpp"

using namespace fmasss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("fmasss_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

fs::path fixture(const std::string& name, double exp_delta, int time_points, bool covariate_effect = true,
                 std::uint64_t seed = 20190501) {
  const auto d = scratch(name);
  sim::SimulationConfig c;
  c.time_points = time_points;
  c.covariate_effect = covariate_effect;
  c.seed = seed;
  c.finalize();
  auto rng = derive_stream(c.seed, {2});
  sim::write_fixture(sim::generate_dataset(c, exp_delta, rng), c.geometry, d);
  return d;
}

RunConfig fixture_config(const fs::path& d, const std::string& mode) {
  RunConfig c;
  c.locations = (d / "locations.csv").string();
  c.counts = (d / "counts.csv").string();
  c.series = (d / "series.csv").string();
  c.mode = mode;
  c.monte_carlo = 99;
  c.output = (d / ("out-" + mode)).string();
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FMASSS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::set<std::string> ids_of(const std::vector<int>& members, const StudyRegion& r) {
  std::set<std::string> s;
  for (int m : members) s.insert(r.locations[static_cast<std::size_t>(m)].id);
  return s;
}

}  // namespace

TEST(Ingest, ToyRegion) {
  const auto d = scratch("toy");
  write(d / "loc.csv", "id,x,y\na,0,0\nb,1,0\nc,0,2\n");
  write(d / "cnt.csv", "id,cases,population\nc,3,300\na,1,100\nb,2,250\n");
  write(d / "ser.csv", "id,t,value\na,1,0.5\na,0,0.25\nb,0,1\nc,0,2\nb,1,1.5\nc,1,2.5\n");
  RunConfig cfg;
  cfg.locations = (d / "loc.csv").string();
  cfg.counts = (d / "cnt.csv").string();
  cfg.series = (d / "ser.csv").string();
  cfg.mode = "univariate";
  const auto r = ingest(cfg);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.locations[2].id, "c");
  EXPECT_DOUBLE_EQ(r.cases(0), 1.0);
  EXPECT_DOUBLE_EQ(r.populations(2), 300.0);
  EXPECT_EQ(r.series_lengths(), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(r.series[0].times, (std::vector<double>{0, 1}));
  EXPECT_EQ(r.series[0].values, (std::vector<double>{0.25, 0.5}));
}

TEST(Ingest, MissingDuplicateAndUnknownIds) {
  const auto d = scratch("ids");
  write(d / "loc.csv", "id,x,y\na,0,0\nb,1,0\nzz9,0,2\n");
  RunConfig cfg;
  cfg.locations = (d / "loc.csv").string();
  cfg.counts = (d / "cnt.csv").string();
  cfg.mode = "none";
  auto expect_error = [&](const std::string& counts, const std::string& needle) {
    write(d / "cnt.csv", counts);
    try {
      ingest(cfg);
      ADD_FAILURE() << "no error for " << needle;
    } catch (const IngestionError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("id,cases,population\na,1,10\nb,1,10\n", "zz9");
  expect_error("id,cases,population\na,1,10\nb,1,10\nb,1,10\nzz9,1,1\n", "duplicate ids: b");
  expect_error("id,cases,population\na,1,10\nb,1,10\nzz9,1,1\nq7,1,1\n", "q7");
  expect_error("id,cases\na,1\nb,1\nzz9,1\n", "population");
  write(d / "cnt.csv", "id,cases,population\na,1,10\nb,1,10\nzz9,1,1\n");
  cfg.mode = "functional";
  EXPECT_THROW(ingest(cfg), ConfigError);
}

TEST(Ingest, SeriesShorterThanBasisDimensionIsRejected) {
  const auto d = fixture("short", 1.0, 10);
  auto cfg = fixture_config(d, "functional");
  try {
    ingest(cfg);
    FAIL();
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("K=15"), std::string::npos) << msg;
    EXPECT_NE(msg.find("01 (m=10)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("94 total"), std::string::npos) << msg;
  }
  cfg.mode = "univariate";
  EXPECT_NO_THROW(ingest(cfg));
}

TEST(Ingest, SimulatedFixture) {
  const auto d = fixture("f94", 2.0, 64);
  const auto r = ingest(fixture_config(d, "functional"));
  EXPECT_EQ(r.size(), 94u);
  for (auto m : r.series_lengths()) EXPECT_EQ(m, 64u);
}

TEST(Pipeline, ModeNoneIsClassicalKulldorff) {
  const auto d = fixture("none", 2.0, 64);
  auto cfg = fixture_config(d, "none");
  const auto res = run_pipeline(cfg);
  const auto& r = res.region;
  const double C = r.cases.sum(), N = r.populations.sum();
  double best = 0.0;
  for (std::size_t k = 0; k < res.windows.size(); ++k) {
    double c = 0, n = 0;
    for (int m : res.windows.windows[k].members) {
      c += r.cases(m);
      n += r.populations(m);
    }
    const double ref = oracle::kulldorff_llr(c, n, C, N);
    EXPECT_NEAR(res.analysis.scan.fits[k].llr, ref, 1e-9 * std::max(1.0, ref));
    best = std::max(best, ref);
  }
  EXPECT_NEAR(res.analysis.scan.lambda, best, 1e-9 * best);
  EXPECT_LT((res.analysis.null_fit.adjusted_populations - r.populations).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(res.analysis.null_fit.alpha, std::log(C / N), 1e-10);

  const auto reps = csv::read_file(fs::path(cfg.output) / "replicates.csv");
  ASSERT_EQ(reps.rows.size(), 99u);
  int above = 0;
  for (std::size_t k = 0; k < reps.rows.size(); ++k)
    above += csv::parse_double(reps.rows[k][reps.column("lambda")], reps, k, "lambda") >= res.analysis.scan.lambda;
  EXPECT_DOUBLE_EQ(res.analysis.mlc_p_value, (1.0 + above) / 100.0);
  EXPECT_FALSE(fs::exists(fs::path(cfg.output) / "theta.csv"));
}

TEST(Pipeline, OutputsRoundTrip) {
  const auto d = fixture("roundtrip", 2.0, 64);
  const auto cfg = fixture_config(d, "functional");
  const auto res = run_pipeline(cfg);
  const fs::path out = cfg.output;
  const auto read = read_cluster_csv(out / "clusters.csv");
  ASSERT_EQ(read.size(), res.analysis.clusters.size());
  ASSERT_FALSE(read.empty());
  for (std::size_t k = 0; k < read.size(); ++k) {
    std::vector<std::string> want;
    for (int m : res.analysis.clusters[k].members) want.push_back(res.region.locations[m].id);
    EXPECT_EQ(read[k], want);
  }
  const auto geo = nlohmann::json::parse(slurp(out / "clusters.geojson"));
  EXPECT_EQ(geo["type"], "FeatureCollection");
  EXPECT_EQ(geo["features"].size(), read.size());
  EXPECT_EQ(geo["features"][0]["geometry"]["coordinates"].size(), read[0].size());

  const auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(man["status"], "ok");
  EXPECT_EQ(man["version"], kVersion);
  EXPECT_EQ(man["seed"], 1);
  EXPECT_EQ(man["config"]["mode"], "functional");
  EXPECT_EQ(man["result"]["n_locations"], 94);
  for (const auto& f : man["files"]) EXPECT_TRUE(fs::exists(out / f.get<std::string>())) << f;
  const auto theta = csv::read_file(out / "theta.csv");
  EXPECT_EQ(theta.rows.size(), 201u);

  // The MLC meets the true cluster of the fixture.
  sim::SimulationConfig sc;
  sc.finalize();
  const auto mlc = ids_of(res.analysis.clusters[0].members, res.region);
  bool hit = false;
  for (int i : sc.true_cluster) hit |= mlc.count(sc.geometry.locations[i].id) > 0;
  EXPECT_TRUE(hit);
  EXPECT_LE(res.analysis.mlc_p_value, 0.05);
}

TEST(Pipeline, ErrorsWriteMachineReadableReport) {
  const auto d = scratch("err");
  write(d / "loc.csv", "id,x,y\na,0,0\nb,1,0\nc,0,2\n");
  write(d / "cnt.csv", "id,cases,population\na,1,10\nb,1,10\n");
  const auto out = d / "out";
  const int code = run_cli("scan --locations " + (d / "loc.csv").string() + " --counts " + (d / "cnt.csv").string() +
                           " --mode none --output " + out.string());
  EXPECT_NE(code, 0);
  ASSERT_TRUE(fs::exists(out / "error.json"));
  const auto err = nlohmann::json::parse(slurp(out / "error.json"));
  EXPECT_EQ(err["status"], "error");
  EXPECT_NE(err["message"].get<std::string>().find("c"), std::string::npos);
  const auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(man["status"], "error");
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  RunConfig c;
  c.locations = "l.csv";
  c.counts = "c.csv";
  c.basis = "fourier";
  c.fourier_dimension = 7;
  c.t_min = 0.5;
  c.monte_carlo = 59;
  c.seed = 1234567890123ULL;
  c.refit_null = false;
  c.sidedness = "high";
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(*back.t_min, 0.5);
  EXPECT_FALSE(back.t_max.has_value());
  EXPECT_THROW(config_from_json(R"({"locations":"a","colour":"red"})"), ConfigError);
  EXPECT_THROW(config_from_json("[1,2]"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"monte_carlo":"many"})"), ConfigError);
  RunConfig bad = c;
  bad.max_fraction = 0.7;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_EQ(RunConfig{}.basis_dimension(), 15);
  EXPECT_EQ(c.basis_dimension(), 7);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const auto d = fixture("cli", 2.0, 64);
  auto cfg = fixture_config(d, "functional");
  cfg.monte_carlo = 999;
  cfg.output = (d / "out").string();
  write(d / "config.json", config_to_json(cfg));
  ASSERT_EQ(run_cli("scan --config " + (d / "config.json").string() + " --monte_carlo 49"), 0);
  const auto first = snapshot(d / "out");
  ASSERT_EQ(run_cli("scan --config " + (d / "config.json").string() + " --monte_carlo 49"), 0);
  const auto second = snapshot(d / "out");
  EXPECT_EQ(first, second);
  EXPECT_GE(first.size(), 5u);
  const auto man = nlohmann::json::parse(first.at("manifest.json"));
  EXPECT_EQ(man["config"]["monte_carlo"], 49);
  EXPECT_EQ(man["result"]["monte_carlo"]["replicates"], 49);
}

TEST(Compare, RowCountsAndFakeCluster) {
  const auto d = fixture("cmp", 1.0, 64);
  auto cfg = fixture_config(d, "functional");
  cfg.output = (d / "cmp").string();
  const auto cmp = compare_models(cfg);
  ASSERT_TRUE(cmp.all_ok());
  ASSERT_EQ(cmp.modes.size(), 4u);
  std::size_t total = 0;
  for (const auto& m : cmp.modes) {
    total += m.clusters.size();
    EXPECT_EQ(read_cluster_csv(fs::path(cfg.output) / m.mode / "clusters.csv").size(), m.clusters.size());
  }
  const auto table = csv::read_file(fs::path(cfg.output) / "comparison.csv");
  EXPECT_EQ(table.rows.size(), total);

  sim::SimulationConfig sc;
  sc.finalize();
  std::set<std::string> fake;
  for (int i : sc.fake_cluster) fake.insert(sc.geometry.locations[i].id);
  auto reports_fake = [&](const ModeOutcome& m) {
    for (const auto& c : m.clusters)
      for (int k : c.members)
        if (fake.count(sc.geometry.locations[k].id) && c.p_value <= 0.05) return true;
    return false;
  };
  EXPECT_EQ(cmp.modes[0].mode, "none");
  EXPECT_EQ(cmp.modes[3].mode, "functional");
  EXPECT_TRUE(reports_fake(cmp.modes[0]));
  EXPECT_FALSE(reports_fake(cmp.modes[3]));
  EXPECT_EQ(nlohmann::json::parse(slurp(fs::path(cfg.output) / "manifest.json"))["status"], "ok");
}

TEST(Compare, VacuousAdjustmentGivesSameMlc) {
  // Every location carries the same curve, so no covariate varies in space.
  const auto d = fixture("vacuous", 3.0, 64, false);
  const auto st = csv::read_file(d / "series.csv");
  const auto ct = csv::read_file(d / "counts.csv");
  {
    std::ofstream out(d / "series.csv", std::ios::binary);
    csv::Writer w(out);
    w.row(st.header);
    for (const auto& loc : ct.rows)
      for (const auto& row : st.rows)
        if (row[0] == "01") w.row({loc[0], row[1], row[2]});
  }
  auto cfg = fixture_config(d, "functional");
  cfg.monte_carlo = 19;
  cfg.output = (d / "cmp").string();
  const auto cmp = compare_models(cfg);
  ASSERT_TRUE(cmp.all_ok());
  for (const auto& m : cmp.modes) {
    EXPECT_EQ(m.mlc_member_ids, cmp.modes[0].mlc_member_ids) << m.mode;
    EXPECT_NEAR(m.mlc_llr, cmp.modes[0].mlc_llr, 1e-9) << m.mode;
  }
}

TEST(Compare, PartialFailureIsIsolated) {
  const auto d = fixture("partial", 1.0, 64);
  // Drop observations of one location so the common grid breaks for multivariate mode.
  const auto st = csv::read_file(d / "series.csv");
  std::ofstream out(d / "series.csv", std::ios::binary);
  csv::Writer w(out);
  w.row(st.header);
  int dropped = 0;
  for (const auto& row : st.rows) {
    if (row[0] == "01" && dropped < 2) {
      ++dropped;
      continue;
    }
    w.row(row);
  }
  out.close();
  auto cfg = fixture_config(d, "functional");
  cfg.monte_carlo = 19;
  cfg.output = (d / "cmp").string();
  const auto cmp = compare_models(cfg);
  EXPECT_FALSE(cmp.all_ok());
  int failed = 0;
  for (const auto& m : cmp.modes) failed += !m.ok;
  EXPECT_EQ(failed, 1);
  EXPECT_FALSE(cmp.modes[2].ok);
  EXPECT_TRUE(fs::exists(fs::path(cfg.output) / "multivariate" / "error.json"));
  EXPECT_EQ(nlohmann::json::parse(slurp(fs::path(cfg.output) / "manifest.json"))["status"], "partial");
  write(d / "cfg.json", config_to_json(cfg));
  EXPECT_EQ(run_cli("compare --config " + (d / "cfg.json").string()), 2);
}

TEST(Cli, WindowsAndVersion) {
  const auto d = fixture("windows", 1.0, 16);
  EXPECT_EQ(run_cli("--version"), 0);
  ASSERT_EQ(run_cli("windows --locations " + (d / "locations.csv").string() + " --counts " +
                    (d / "counts.csv").string() + " --output " + (d / "windows.csv").string()),
            0);
  const auto file = d / "windows.csv";
  ASSERT_TRUE(fs::is_regular_file(file));
  const auto t = csv::read_file(file);
  EXPECT_GT(t.rows.size(), 94u);
  EXPECT_EQ(t.header[4], "member_ids");
  EXPECT_NE(run_cli("scan --max_fraction 0.9 --locations x --counts y"), 0);
}

TEST(Pipeline, FunctionalModeFindsTrueClusterAcrossSeeds) {
  sim::SimulationConfig c;
  c.replicates = 100;
  c.monte_carlo = 99;
  c.relative_risks = {2.0};
  c.modes = {AdjustmentMode::Functional};
  c.time_points = 64;
  c.seed = 7;
  const auto res = sim::run_study(c);
  const auto& m = res.find("functional", 2.0, "true");
  EXPECT_EQ(m.failures, 0);
  EXPECT_GE(static_cast<int>(std::lround(m.power * m.replicates)), 90);
}
