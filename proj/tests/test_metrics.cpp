#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sems/metrics.hpp"
#include "sems/rng.hpp"

using namespace sems;

TEST_CASE("perfect predictions score one") {
    std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    ClassificationReport rep = classification_report(labels, labels, 3);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.macro_f1 == 1.0);
    for (double f : rep.per_class_f1) CHECK(f == 1.0);
}

TEST_CASE("constant predictor on balanced three-class data") {
    std::vector<int> labels, preds;
    for (int i = 0; i < 30; ++i) {
        labels.push_back(i % 3);
        preds.push_back(0);
    }
    ClassificationReport rep = classification_report(preds, labels, 3);
    CHECK(rep.accuracy == Catch::Approx(1.0 / 3.0));
    CHECK(rep.per_class_f1[0] == Catch::Approx(0.5));
    CHECK(rep.per_class_f1[1] == 0.0);
    CHECK(rep.per_class_f1[2] == 0.0);
    CHECK(rep.macro_f1 == Catch::Approx(1.0 / 6.0));
}

TEST_CASE("report is invariant to within-class shuffles") {
    std::vector<int> labels = {0, 0, 1, 1, 2, 2};
    std::vector<int> preds_a = {0, 1, 1, 2, 2, 0};
    // permute predictions within each label group
    std::vector<int> preds_b = {1, 0, 2, 1, 0, 2};
    ClassificationReport a = classification_report(preds_a, labels, 3);
    ClassificationReport b = classification_report(preds_b, labels, 3);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.macro_f1 == Catch::Approx(b.macro_f1));
    CHECK_THROWS_AS(classification_report({}, {}, 3), ValidationError);
    CHECK_THROWS_AS(classification_report({3}, {0}, 3), ValidationError);
}

TEST_CASE("macro f1 reaches one only on diagonal confusions") {
    std::vector<int> labels = {0, 1, 2, 0};
    std::vector<int> preds = {0, 1, 2, 1};
    ClassificationReport rep = classification_report(preds, labels, 3);
    CHECK(rep.macro_f1 < 1.0);
}

TEST_CASE("delay report in bins and seconds") {
    CHECK(delay_report({1e-6, 2e-6}, {1e-6, 2e-6}, 1e-8).mae_bins == 0.0);
    DelayErrorReport one = delay_report({1.1e-6}, {1.0e-6}, 1e-7);
    CHECK(one.mae_bins == Catch::Approx(1.0));
    CHECK(one.mae_seconds == Catch::Approx(1e-7));
    DelayErrorReport sym = delay_report({1.0 + 0.5, 1.0 - 0.5}, {1.0, 1.0}, 1.0);
    CHECK(sym.mae_seconds == Catch::Approx(0.5));
    CHECK_THROWS_AS(delay_report({}, {}, 1.0), ValidationError);

    // permutation invariance over frames
    DelayErrorReport a = delay_report({1.0, 2.0, 5.0}, {1.5, 2.5, 4.0}, 1.0);
    DelayErrorReport b = delay_report({5.0, 1.0, 2.0}, {4.0, 1.5, 2.5}, 1.0);
    CHECK(a.mae_seconds == Catch::Approx(b.mae_seconds));
}

TEST_CASE("discriminative gain hand values") {
    // all class means identical -> zero
    std::vector<std::vector<double>> same = {{0.0}, {2.0}, {0.0}, {2.0}};
    CHECK(discriminative_gain(same, {0, 0, 1, 1}) == 0.0);

    // distinct means, zero within-class scatter -> infinity sentinel
    std::vector<std::vector<double>> tight = {{0.0}, {0.0}, {2.0}, {2.0}};
    CHECK(std::isinf(discriminative_gain(tight, {0, 0, 1, 1})));

    // two 1-D classes at +-1 with unit population variance -> J = 1
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) {
        double offset = i % 2 == 0 ? 1.0 : -1.0;
        x.push_back({-1.0 + offset});
        x.push_back({1.0 + offset});
        y.push_back(i % 2 == 0 ? 0 : 1);
        y.push_back(i % 2 == 0 ? 0 : 1);
    }
    // class 0 samples: {0, 2} mean 1 var 1; class 1 samples: {-2, 0} mean -1 var 1
    CHECK(discriminative_gain(x, y) == Catch::Approx(1.0));

    CHECK_THROWS_AS(discriminative_gain({{1.0}}, {0}), ValidationError);
    CHECK_THROWS_AS(discriminative_gain({{1.0}, {2.0}}, {0, 0}), ValidationError);
}

TEST_CASE("discriminative gain is invariant to rotation and translation") {
    Rng rng(3);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        int cls = i % 3;
        x.push_back({2.0 * cls + 0.3 * rng.normal(), -1.0 * cls + 0.4 * rng.normal()});
        y.push_back(cls);
    }
    double base = discriminative_gain(x, y);

    const double theta = 0.7;
    std::vector<std::vector<double>> moved;
    for (const auto& v : x)
        moved.push_back({std::cos(theta) * v[0] - std::sin(theta) * v[1] + 5.0,
                         std::sin(theta) * v[0] + std::cos(theta) * v[1] - 2.0});
    CHECK(discriminative_gain(moved, y) == Catch::Approx(base).epsilon(1e-9));

    std::vector<std::vector<double>> scaled;
    for (const auto& v : x) scaled.push_back({3.0 * v[0], 3.0 * v[1]});
    CHECK(discriminative_gain(scaled, y) == Catch::Approx(base).epsilon(1e-9));
}
