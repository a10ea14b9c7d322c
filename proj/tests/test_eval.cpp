#include <catch2/catch_amalgamated.hpp>

#include "marsdust/eval.hpp"
#include "marsdust/rng.hpp"

using namespace marsdust;

TEST_CASE("perfect predictions produce the identity report") {
  std::vector<int> truth = {0, 1, 1, 0, 1};
  auto r = evaluate(truth, truth);
  REQUIRE(r.confusion[0][0] == 2);
  REQUIRE(r.confusion[1][1] == 3);
  REQUIRE(r.confusion[0][1] == 0);
  REQUIRE(r.confusion[1][0] == 0);
  REQUIRE(r.accuracy == 1.0);
  REQUIRE(r.f1[0] == 1.0);
  REQUIRE(r.f1[1] == 1.0);
  REQUIRE(r.macro_f1 == 1.0);
}

TEST_CASE("fully inverted predictions give zero accuracy") {
  std::vector<int> truth = {0, 1, 1, 0};
  std::vector<int> pred = {1, 0, 0, 1};
  auto r = evaluate(pred, truth);
  REQUIRE(r.confusion[0][0] == 0);
  REQUIRE(r.confusion[1][1] == 0);
  REQUIRE(r.accuracy == 0.0);
  REQUIRE(r.f1[0] == 0.0);
  REQUIRE(r.f1[1] == 0.0);
}

TEST_CASE("12-sample fixture matches the hand tally") {
  std::vector<int> truth = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  std::vector<int> pred = {0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1};
  auto r = evaluate(pred, truth);
  REQUIRE(r.confusion[0][0] == 3);
  REQUIRE(r.confusion[0][1] == 2);
  REQUIRE(r.confusion[1][0] == 2);
  REQUIRE(r.confusion[1][1] == 5);
  REQUIRE(r.support[0] == 5);
  REQUIRE(r.support[1] == 7);
  REQUIRE(r.accuracy == Catch::Approx(8.0 / 12).margin(1e-12));
  REQUIRE(r.precision[0] == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(r.recall[0] == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(r.f1[0] == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(r.precision[1] == Catch::Approx(5.0 / 7).margin(1e-12));
  REQUIRE(r.f1[1] == Catch::Approx(5.0 / 7).margin(1e-12));
  REQUIRE(r.macro_f1 == Catch::Approx((0.6 + 5.0 / 7) / 2).margin(1e-12));
  REQUIRE(r.weighted_f1 == Catch::Approx(2.0 / 3).margin(1e-12));

  auto j = to_json(r);
  REQUIRE(j["confusion"][0][1] == 2);
  REQUIRE(j["accuracy"] == Catch::Approx(8.0 / 12));
}

TEST_CASE("report identities hold over 1000 random prediction vectors") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 2 + rng.next_below(50);
    std::vector<int> truth(n), pred(n);
    for (auto& v : truth) v = rng.next_bool();
    for (auto& v : pred) v = rng.next_bool();
    auto r = evaluate(pred, truth);

    REQUIRE(r.accuracy ==
            Catch::Approx(double(r.confusion[0][0] + r.confusion[1][1]) / r.total)
                .margin(1e-12));
    REQUIRE(r.support[0] + r.support[1] == r.total);
    for (int c = 0; c < 2; ++c) {
      double p = r.precision[c], rec = r.recall[c];
      if (p + rec > 0)
        REQUIRE(r.f1[c] == Catch::Approx(2 * p * rec / (p + rec)).margin(1e-12));
      else
        REQUIRE(r.f1[c] == 0.0);
    }
    // support-weighted recall collapses to accuracy
    REQUIRE(r.weighted_recall == Catch::Approx(r.accuracy).margin(1e-12));
  }
}

TEST_CASE("invalid inputs are rejected") {
  REQUIRE_THROWS_AS(evaluate({0, 1}, {0}), Error);
  REQUIRE_THROWS_AS(evaluate({}, {}), Error);
  REQUIRE_THROWS_AS(evaluate({2}, {0}), Error);
  REQUIRE_THROWS_AS(evaluate({0}, {-1}), Error);
}
