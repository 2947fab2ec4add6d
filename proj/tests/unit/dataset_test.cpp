#include "treebvm/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "treebvm/errors.hpp"

using namespace treebvm;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("grid design: 1-d points are i/n") {
  Dataset d = make_grid_design(4, 1);
  CHECK(d.n == 4);
  CHECK(d.p == 1);
  REQUIRE(d.x.size() == 4);
  CHECK(d.x[0] == 0.25);
  CHECK(d.x[1] == 0.5);
  CHECK(d.x[2] == 0.75);
  CHECK(d.x[3] == 1.0);
  CHECK(d.y == std::vector<double>(4, 0.0));
}

TEST_CASE("grid design: 2-d tensor grid, last axis fastest") {
  Dataset d = make_grid_design(4, 2);
  REQUIRE(d.x.size() == 8);
  // (0.5,0.5), (0.5,1.0), (1.0,0.5), (1.0,1.0)
  CHECK(d.coord(0, 0) == 0.5);
  CHECK(d.coord(0, 1) == 0.5);
  CHECK(d.coord(1, 0) == 0.5);
  CHECK(d.coord(1, 1) == 1.0);
  CHECK(d.coord(2, 0) == 1.0);
  CHECK(d.coord(2, 1) == 0.5);
  CHECK(d.coord(3, 0) == 1.0);
  CHECK(d.coord(3, 1) == 1.0);
}

TEST_CASE("grid design: 3-d cube and shape errors") {
  Dataset d = make_grid_design(8, 3);
  CHECK(d.n == 8);
  CHECK(d.coord(0, 0) == 0.5);
  CHECK(d.coord(7, 2) == 1.0);
  CHECK_THROWS_AS(make_grid_design(12, 2), NonSquareGrid);
  CHECK_THROWS_AS(make_grid_design(1, 1), ConfigInvalid);
}

TEST_CASE("truth catalog values") {
  Dataset d = make_grid_design(8, 1);
  SUBCASE("constant") {
    auto f0 = evaluate_truth(d, "f0_const", 1.0, 0.7);
    for (double v : f0) CHECK(v == 0.7);
  }
  SUBCASE("lipschitz sinewave") {
    auto f0 = evaluate_truth(d, "f0_lipschitz", 1.0);
    CHECK(f0[1] == doctest::Approx(0.5).epsilon(1e-12));    // x = 1/4
    CHECK(f0[3] == doctest::Approx(0.0).epsilon(1e-12));    // x = 1/2
    CHECK(f0[5] == doctest::Approx(-0.5).epsilon(1e-12));   // x = 3/4
  }
  SUBCASE("holder norm power") {
    auto f0 = evaluate_truth(d, "f0_holder", 0.75);
    CHECK(f0[1] == doctest::Approx(std::pow(0.25, 0.75)).epsilon(1e-12));
    Dataset d2 = make_grid_design(4, 2);
    auto g0 = evaluate_truth(d2, "f0_holder", 0.75);
    CHECK(g0[0] == doctest::Approx(std::pow(std::sqrt(0.5), 0.75)).epsilon(1e-12));
  }
  SUBCASE("flat half") {
    auto f0 = evaluate_truth(d, "f0_flat_half", 1.0);
    for (int i = 0; i < 4; ++i) CHECK(f0[i] == 0.0);         // x <= 1/2
    CHECK(f0[5] == doctest::Approx(0.5).epsilon(1e-12));     // x = 3/4
    Dataset d2 = make_grid_design(4, 2);
    auto g0 = evaluate_truth(d2, "f0_flat_half", 1.0);
    CHECK(g0[0] == 0.0);                                     // (1/2, 1/2)
    CHECK(g0[2] != 0.0);                                     // (1, 1/2)
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(evaluate_truth(d, "f0_const", 0.0), ConfigInvalid);
    CHECK_THROWS_AS(evaluate_truth(d, "f0_const", 1.5), ConfigInvalid);
    CHECK_THROWS_AS(evaluate_truth(d, "f0_holder", 0.5), ConfigInvalid);
    CHECK_THROWS_AS(evaluate_truth(d, "f0_bogus", 1.0), UnknownTruthFamily);
  }
}

TEST_CASE("responses: zero truth gives y = eps exactly") {
  Dataset design = make_grid_design(4, 1);
  auto [data, truth] = generate_responses(design, "f0_const", 1.0, 42, 0.0);
  REQUIRE(truth.eps.size() == 4);
  CHECK(data.y == truth.eps);
  CHECK(truth.f0_id == "f0_const");
  CHECK(truth.seed == 42);
}

TEST_CASE("responses: reproducible by seed, distinct across seeds") {
  Dataset design = make_grid_design(32, 1);
  auto [a, ta] = generate_responses(design, "f0_lipschitz", 1.0, 7);
  auto [b, tb] = generate_responses(design, "f0_lipschitz", 1.0, 7);
  auto [c, tc] = generate_responses(design, "f0_lipschitz", 1.0, 8);
  CHECK(ta.eps == tb.eps);
  CHECK(a.y == b.y);
  CHECK(ta.eps != tc.eps);
  for (int i = 0; i < design.n; ++i) {
    const double expect = ta.f0_values[i] + ta.eps[i];
    CHECK(a.y[i] == expect);
  }
}

TEST_CASE("responses: noise sample mean obeys a CLT bound") {
  Dataset design = make_grid_design(1024, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 2026);
  double mean = 0.0;
  for (double e : truth.eps) mean += e;
  mean /= design.n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(1024.0));
}

TEST_CASE("weight catalog") {
  Dataset d = make_grid_design(4, 1);
  SUBCASE("one") {
    FunctionalWeight w = make_weight(d, "one", 1.0);
    for (double v : w.a_values) CHECK(v == 1.0);
    CHECK(w.sup_bound == 2.0);
    CHECK(w.gamma == 1.0);
  }
  SUBCASE("x1") {
    Dataset d2 = make_grid_design(4, 2);
    FunctionalWeight w = make_weight(d2, "x1", 1.0);
    CHECK(w.a_values[0] == 0.5);
    CHECK(w.a_values[1] == 0.5);
    CHECK(w.a_values[2] == 1.0);
    CHECK(w.sup_bound == 2.0);
  }
  SUBCASE("kink") {
    FunctionalWeight w = make_weight(d, "kink", 0.3);
    CHECK(w.a_values[0] == doctest::Approx(std::pow(0.25, 0.3)).epsilon(1e-12));
    CHECK(w.a_values[1] == 0.0);
    CHECK(w.gamma == 0.3);
    CHECK(w.sup_bound == 1.0);
  }
  SUBCASE("gamma validation") {
    CHECK_THROWS_WITH_AS(make_weight(d, "kink", 0.0),
                         "make_weight: gamma must lie in (0,1]", ConfigInvalid);
    CHECK_THROWS_AS(make_weight(d, "kink", 1.2), ConfigInvalid);
    CHECK_THROWS_AS(make_weight(d, "sawtooth", 1.0), ConfigInvalid);
  }
}

TEST_CASE("design regularity: 1-d grid n=16 is regular through s=2") {
  Dataset d = make_grid_design(16, 1);
  RegularityVerdict v = check_design_regularity(d, 2, 2.0);
  CHECK(v.regular);
  CHECK(v.first_failing_s == 0);
  REQUIRE(v.rows.size() == 2);
  CHECK(v.rows[0].s == 1);
  CHECK(v.rows[0].max_diam == doctest::Approx(7.0 / 16.0).epsilon(1e-12));
  CHECK(v.rows[0].typical_diam == doctest::Approx(7.0 / 16.0).epsilon(1e-12));
  CHECK(v.rows[1].max_diam == doctest::Approx(3.0 / 16.0).epsilon(1e-12));
  CHECK(v.rows[0].pass);
  CHECK(v.rows[1].pass);
}

TEST_CASE("design regularity: point mass plus outlier is irregular") {
  Dataset d;
  d.n = 16;
  d.p = 1;
  d.x.assign(16, 0.0);
  d.x[15] = 1.0;
  d.y.assign(16, 0.0);
  RegularityVerdict v = check_design_regularity(d, 1, 2.0);
  CHECK_FALSE(v.regular);
  CHECK(v.first_failing_s == 1);
  REQUIRE(v.rows.size() == 1);
  CHECK(v.rows[0].max_diam == doctest::Approx(1.0));
  CHECK(v.rows[0].typical_diam == doctest::Approx(0.5));
}

TEST_CASE("design regularity: all-zero diameters count as regular") {
  Dataset d = make_grid_design(2, 1);
  RegularityVerdict v = check_design_regularity(d, 1, 1.5);
  CHECK(v.regular);
  REQUIRE(v.rows.size() == 1);
  CHECK(v.rows[0].max_diam == 0.0);
  CHECK(v.rows[0].pass);
}

TEST_CASE("design regularity: dyadic grids pass at every depth, rows capped") {
  Dataset d = make_grid_design(32, 1);
  RegularityVerdict v = check_design_regularity(d, 10, 2.0);
  CHECK(v.regular);
  REQUIRE(v.rows.size() == 5);  // 2^s > 32 beyond s = 5
  for (const RegularityRow& row : v.rows) CHECK(row.pass);
}

TEST_CASE("dataset JSON round trip is bitwise exact") {
  Dataset design = make_grid_design(16, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 99);
  auto [back, btruth] = dataset_from_json(dataset_to_json(data, truth));
  CHECK(back.n == data.n);
  CHECK(back.p == data.p);
  CHECK(back.x == data.x);
  CHECK(back.y == data.y);
  CHECK(btruth.f0_values == truth.f0_values);
  CHECK(btruth.eps == truth.eps);
  CHECK(btruth.seed == truth.seed);
  CHECK(btruth.f0_id == truth.f0_id);
  CHECK(btruth.alpha == truth.alpha);
}

TEST_CASE("dataset JSON file round trip and IO errors") {
  Dataset design = make_grid_design(9, 2);
  auto [data, truth] = generate_responses(design, "f0_holder", 0.8, 5);
  const std::string path = temp_path("treebvm_dataset_test.json");
  save_dataset_json(data, truth, path);
  auto [back, btruth] = load_dataset_json(path);
  CHECK(back.x == data.x);
  CHECK(back.y == data.y);
  CHECK(btruth.alpha == 0.8);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_dataset_json(temp_path("treebvm_no_such_file.json")), IoError);
  CHECK_THROWS_AS(dataset_from_json("{not json"), IoError);
  nlohmann::json j = nlohmann::json::parse(dataset_to_json(data, truth));
  j["x"] = std::vector<double>{1.0, 2.0};
  CHECK_THROWS_AS(dataset_from_json(j.dump()), IoError);
  j = nlohmann::json::parse(dataset_to_json(data, truth));
  j.erase("eps");
  CHECK_THROWS_AS(dataset_from_json(j.dump()), IoError);
}

TEST_CASE("dataset CSV export") {
  Dataset design = make_grid_design(4, 1);
  auto [data, truth] = generate_responses(design, "f0_lipschitz", 1.0, 3);
  const std::string path = temp_path("treebvm_dataset_test.csv");
  save_dataset_csv(data, truth, path);
  std::ifstream in(path);
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x_1,y,f0,eps");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    if (rows == 1) {
      // %.17g output parses back to the exact stored double
      const double x0 = std::strtod(line.c_str(), nullptr);
      CHECK(x0 == data.x[0]);
    }
  }
  CHECK(rows == 4);
  std::filesystem::remove(path);
}
