#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

#include "vqafusion/metrics.hpp"
#include "vqafusion/sweep.hpp"
#include "vqafusion/tradeoff.hpp"

using namespace vqaf;

namespace {

const std::string kFixtures = VQAF_FIXTURES_DIR;

TradeoffPoint point(const std::string& key, std::uint64_t complexity,
                    double accuracy) {
  TradeoffPoint p;
  p.config_key = key;
  p.report.config_id = key;
  p.report.trainable_params = complexity;
  p.complexity = complexity;
  p.accuracy = accuracy;
  return p;
}

// independent O(n^2) dominance oracle, including the both-axes tie rule
std::vector<std::string> frontier_oracle(
    const std::vector<TradeoffPoint>& points) {
  std::vector<std::string> keys;
  for (const auto& p : points) {
    bool dominated = false;
    for (const auto& o : points) {
      if (o.complexity <= p.complexity && o.accuracy >= p.accuracy &&
          (o.complexity < p.complexity || o.accuracy > p.accuracy))
        dominated = true;
      if (o.complexity == p.complexity && o.accuracy == p.accuracy &&
          o.config_key < p.config_key)
        dominated = true;  // tie broken toward the smaller key
    }
    if (!dominated) keys.push_back(p.config_key);
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::string> sorted_keys(const std::vector<TradeoffPoint>& pts) {
  std::vector<std::string> keys;
  for (const auto& p : pts) keys.push_back(p.config_key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

ComplexityReport fake_report(const std::string& feature,
                             const std::string& kind,
                             const std::string& fusion,
                             const std::string& attention,
                             std::uint64_t params) {
  ComplexityReport r;
  r.feature = feature;
  r.feature_kind = kind;
  r.fusion = fusion;
  r.attention = attention;
  r.config_id = feature + "-" + kind + "/" + fusion + "/" + attention;
  r.trainable_params = params;
  r.flops = params * 2;
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("bundled fixtures parse and hold the transcribed cells") {
  AccuracyFixture t1 = parse_fixture_csv(kFixtures + "/table1_vqav2_val.csv");
  CHECK(t1.rows.size() == 80);
  std::map<std::string, double> lookup;
  for (const auto& row : t1.rows) lookup[row.key()] = row.accuracy;
  CHECK(lookup.at("ResNet152/SG/MFH/co") == 60.53);
  CHECK(lookup.at("ResNet152/SG/Block/co") == 60.49);
  CHECK(lookup.at("PolyNet/IL/Linear/none") == 40.22);
  CHECK(lookup.at("InceptionV4/IL/MCB/none") == 52.83);

  AccuracyFixture t2 = parse_fixture_csv(kFixtures + "/table2_vqacp2_test.csv");
  CHECK(t2.rows.size() == 80);
  std::map<std::string, double> lookup2;
  for (const auto& row : t2.rows) lookup2[row.key()] = row.accuracy;
  CHECK(lookup2.at("ResNet152/SG/MFH/co") == 34.6);
  CHECK(lookup2.at("SeNet154/SG/MFH/co") == 35.9);

  AccuracyFixture t4 = parse_fixture_csv(kFixtures + "/table4_tdiuc.csv");
  CHECK(t4.rows.size() == 8);
  for (const auto& row : t4.rows) {
    CHECK(row.dataset == "TDIUC");
    CHECK(row.accuracy >= 0.0);
    CHECK(row.accuracy <= 100.0);
  }
}

TEST_CASE("tdiuc per-type cells reproduce the reported aggregate means") {
  const CsvTable types = read_csv(kFixtures + "/table4_tdiuc_types.csv");
  const CsvTable means = read_csv(kFixtures + "/table4_tdiuc_means.csv");
  std::map<std::string, std::vector<double>> by_fusion;
  for (std::size_t i = 0; i < types.rows.size(); ++i)
    by_fusion[types.rows[i][0]].push_back(
        parse_double_field(types.rows[i][2], "types") / 100.0);
  std::map<std::string, std::map<std::string, double>> reported;
  for (std::size_t i = 0; i < means.rows.size(); ++i)
    reported[means.rows[i][0]][means.rows[i][1]] =
        parse_double_field(means.rows[i][2], "means");

  for (const auto& [fusion, values] : by_fusion) {
    REQUIRE(values.size() == 12);
    const double ampt = 100.0 * mpt(values, MeanKind::Arithmetic);
    const double hmpt = 100.0 * mpt(values, MeanKind::Harmonic);
    INFO(fusion);
    // reported aggregates were computed before per-cell rounding
    CHECK(ampt == Catch::Approx(reported.at(fusion).at("AMPT")).margin(0.06));
    CHECK(hmpt == Catch::Approx(reported.at(fusion).at("HMPT")).margin(0.15));
  }
  // the Linear row zeroes the harmonic mean through its Activity cell
  CHECK(mpt(by_fusion.at("Linear"), MeanKind::Harmonic) == 0.0);
}

TEST_CASE("fixture parser reports bad input with line numbers") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vqaf_fixture_test";
  fs::create_directories(dir);

  const std::string bad_line = (dir / "bad_line.csv").string();
  std::ofstream(bad_line)
      << "dataset,feature,feature_kind,fusion,attention,accuracy\n"
      << "VQAv2,ResNet152,SG,MLB,co\n";
  try {
    parse_fixture_csv(bad_line);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  const std::string bad_value = (dir / "bad_value.csv").string();
  std::ofstream(bad_value)
      << "dataset,feature,feature_kind,fusion,attention,accuracy\n"
      << "VQAv2,ResNet152,SG,MLB,co,sixty\n";
  CHECK_THROWS_AS(parse_fixture_csv(bad_value), ParseError);

  const std::string out_of_range = (dir / "range.csv").string();
  std::ofstream(out_of_range)
      << "dataset,feature,feature_kind,fusion,attention,accuracy\n"
      << "VQAv2,ResNet152,SG,MLB,co,160.0\n";
  CHECK_THROWS_AS(parse_fixture_csv(out_of_range), ValidationError);

  const std::string dup = (dir / "dup.csv").string();
  std::ofstream(dup)
      << "dataset,feature,feature_kind,fusion,attention,accuracy\n"
      << "VQAv2,ResNet152,SG,MLB,co,60.0\n"
      << "VQAv2,ResNet152,SG,MLB,co,61.0\n";
  CHECK_THROWS_AS(parse_fixture_csv(dup), ValidationError);

  CHECK_THROWS_AS(parse_fixture_csv((dir / "missing.csv").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("join keeps unmatched rows visible on both sides") {
  AccuracyFixture fx;
  fx.rows.push_back({"VQAv2", "ResNet152", "SG", "MLB", "co", 57.16});
  fx.rows.push_back({"VQAv2", "ResNet152", "SG", "MFH", "co", 60.53});
  std::vector<ComplexityReport> reports = {
      fake_report("ResNet152", "SG", "MLB", "co", 100),
      fake_report("ResNet152", "SG", "Block", "co", 200),
  };
  JoinResult joined = join_tradeoff(reports, fx, ComplexityAxis::Params);
  REQUIRE(joined.points.size() == 1);
  CHECK(joined.points[0].accuracy == 57.16);
  CHECK(joined.points[0].complexity == 100);
  REQUIRE(joined.unmatched_reports.size() == 1);
  CHECK(joined.unmatched_reports[0] == "ResNet152-SG/Block/co");
  REQUIRE(joined.unmatched_fixture.size() == 1);
  CHECK(joined.unmatched_fixture[0] == "ResNet152/SG/MFH/co");

  // empty fixture: no points, everything unmatched
  JoinResult none = join_tradeoff(reports, AccuracyFixture{},
                                  ComplexityAxis::Params);
  CHECK(none.points.empty());
  CHECK(none.unmatched_reports.size() == 2);

  // flops axis picks the other complexity column
  JoinResult flops = join_tradeoff(reports, fx, ComplexityAxis::Flops);
  CHECK(flops.points[0].complexity == 200);
}

TEST_CASE("co-attention always enlarges a grid profile's model") {
  SweepConfig cfg;
  cfg.profiles = {"ResNet152-SG"};
  cfg.fusions = all_fusion_kinds();
  cfg.attention = SweepConfig::Attention::Both;
  cfg.seed = 4;
  auto reports = run_sweep(cfg);
  REQUIRE(reports.size() == 16);  // two per fusion kind
  std::map<std::string, std::map<std::string, std::uint64_t>> by_fusion;
  for (const auto& r : reports)
    by_fusion[r.fusion][r.attention] = r.trainable_params;
  for (const auto& [fusion, paths] : by_fusion) {
    INFO(fusion);
    REQUIRE(paths.size() == 2);
    CHECK(paths.at("co") > paths.at("none"));
  }
}

TEST_CASE("frontier hand cases") {
  auto result = efficiency_frontier(
      {point("a", 1, 50), point("b", 2, 60), point("c", 3, 55)});
  REQUIRE(result.size() == 2);
  CHECK(result[0].config_key == "a");
  CHECK(result[1].config_key == "b");

  auto single = efficiency_frontier({point("only", 5, 10)});
  REQUIRE(single.size() == 1);
  CHECK(single[0].config_key == "only");

  // exact tie on both axes keeps the smaller key
  auto tie = efficiency_frontier({point("zeta", 1, 50), point("alpha", 1, 50)});
  REQUIRE(tie.size() == 1);
  CHECK(tie[0].config_key == "alpha");

  CHECK_THROWS_AS(efficiency_frontier({}), ValidationError);
}

TEST_CASE("frontier equals the quadratic dominance oracle on random sets") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<TradeoffPoint> points;
    for (std::size_t i = 0; i < n; ++i)
      points.push_back(point("p" + std::to_string(i),
                             rng.uniform_index(40),
                             static_cast<double>(rng.uniform_index(30))));
    const auto fast = efficiency_frontier(points);
    CHECK(sorted_keys(fast) == frontier_oracle(points));
    for (std::size_t i = 1; i < fast.size(); ++i) {
      CHECK(fast[i - 1].complexity < fast[i].complexity);
      CHECK(fast[i - 1].accuracy < fast[i].accuracy);
    }
  }
}

TEST_CASE("emission is deterministic and closed under re-parsing") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vqaf_emit_test";
  fs::create_directories(dir);

  AccuracyFixture fx;
  fx.rows.push_back({"VQAv2", "ResNet152", "SG", "MLB", "co", 57.16});
  fx.rows.push_back({"VQAv2", "ResNet152", "SG", "Block", "co", 60.49});
  std::vector<ComplexityReport> reports = {
      fake_report("ResNet152", "SG", "MLB", "co", 100),
      fake_report("ResNet152", "SG", "Block", "co", 200),
      fake_report("ResNet152", "SG", "MFH", "co", 300),
  };
  JoinResult joined = join_tradeoff(reports, fx, ComplexityAxis::Params);

  const std::string csv_a = (dir / "points_a.csv").string();
  const std::string csv_b = (dir / "points_b.csv").string();
  emit_points(joined, EmitFormat::Csv, csv_a);
  emit_points(joined, EmitFormat::Csv, csv_b);
  CHECK(read_file(csv_a) == read_file(csv_b));

  const std::string json_a = (dir / "points_a.json").string();
  emit_points(joined, EmitFormat::Json, json_a);
  const std::string json_body = read_file(json_a);
  CHECK(json_body.find("unmatched_reports") != std::string::npos);
  CHECK(nlohmann::json::parse(json_body)["points"].size() == 2);

  // format closure: parse the emitted CSV and emit it again, byte for byte
  JoinResult reparsed = parse_points_csv(csv_a, ComplexityAxis::Params);
  REQUIRE(reparsed.points.size() == 2);
  const std::string csv_c = (dir / "points_c.csv").string();
  emit_points(reparsed, EmitFormat::Csv, csv_c);
  // the unmatched comment trailer is not part of the point rows
  const std::string a_body = read_file(csv_a);
  const std::string c_body = read_file(csv_c);
  CHECK(a_body.substr(0, c_body.size()) == c_body);

  // reports without accuracy cannot feed the frontier
  const std::string rep_csv = (dir / "reports.csv").string();
  emit_reports(reports, EmitFormat::Csv, rep_csv);
  CHECK_THROWS_AS(parse_points_csv(rep_csv, ComplexityAxis::Params),
                  ValidationError);
  fs::remove_all(dir);
}
