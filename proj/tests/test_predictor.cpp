#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "test_util.hpp"

using namespace uqchi;

namespace {

WeightPosterior post(std::initializer_list<double> v) {
    return {Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()))};
}

std::vector<PredictionRecord> with_confidences(std::vector<double> conf) {
    std::vector<PredictionRecord> out;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        PredictionRecord r;
        r.subject_id = "r" + std::to_string(i);
        r.confidence = conf[i];
        r.predicted_label = i % 2 ? -1 : 1;
        out.push_back(r);
    }
    return out;
}

std::vector<bool> mask(const std::vector<PredictionRecord>& recs) {
    std::vector<bool> m;
    for (const auto& r : recs) m.push_back(r.abstained);
    return m;
}

}  // namespace

TEST(Predict, Examples) {
    EXPECT_EQ(predict(post({1, -1}), Vector{{2.0, 1.0}}), 1);
    EXPECT_EQ(predict(post({0, 0}), Vector{{2.0, 1.0}}), 1);
    EXPECT_DOUBLE_EQ(confidence(post({0, 0}), Vector{{2.0, 1.0}}), 0.5);
    EXPECT_EQ(predict(post({0.3}), Vector{{-2.0}}), -1);
}

TEST(Predict, DimensionMismatch) {
    try {
        predict(post({1, 2}), Vector{{1.0}});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.code(), "DimensionMismatch");
    }
}

TEST(Predict, InvariantToPositiveRescaling) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int i = 0; i < 200; ++i) {
        const WeightPosterior p{test::random_matrix(rng, 3, 1)};
        const Vector x = test::random_matrix(rng, 3, 1);
        const int base = predict(p, x);
        EXPECT_EQ(predict(WeightPosterior{scale(rng) * p.mean}, x), base);
        EXPECT_EQ(predict(p, scale(rng) * x), base);
    }
}

TEST(Confidence, Examples) {
    EXPECT_DOUBLE_EQ(confidence(post({1, 1}), Vector{{1.0, -1.0}}), 0.5);
    // Phi(1.959964) evaluated independently
    EXPECT_NEAR(confidence(post({1.959964}), Vector{{1.0}}), 0.9750000009035577, 1e-12);
    EXPECT_DOUBLE_EQ(confidence(post({1e6}), Vector{{1.0}}), 1.0);
    try {
        confidence(post({1.0}), Vector{{0.0}});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.code(), "ZeroFeatureVector");
    }
}

TEST(Confidence, MonotoneAndBounded) {
    double prev = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const double z = 0.02 * i;
        const double c = confidence(post({z}), Vector{{1.0}});
        EXPECT_GE(c, 0.5);
        EXPECT_LE(c, 1.0);
        EXPECT_GE(c, prev);
        prev = c;
    }
    // Sign of x does not matter, only |v^T x| / ||x||.
    EXPECT_DOUBLE_EQ(confidence(post({0.7}), Vector{{-3.0}}), confidence(post({0.7}), Vector{{3.0}}));
}

TEST(RejectByThreshold, Examples) {
    const auto recs = with_confidences({0.5, 0.6, 0.99, 1.0});
    EXPECT_EQ(mask(reject_by_threshold(recs, 0.5)), (std::vector<bool>{false, false, false, false}));
    EXPECT_EQ(mask(reject_by_threshold(recs, 1.0)), (std::vector<bool>{true, true, true, false}));
    EXPECT_EQ(mask(reject_by_threshold(with_confidences({0.6, 0.9}), 0.7)), (std::vector<bool>{true, false}));
    EXPECT_THROW(reject_by_threshold(recs, 0.4), ValidationError);
}

TEST(RejectByRate, Examples) {
    EXPECT_EQ(mask(reject_by_rate(with_confidences({0.7, 0.6, 0.9}), 0.0)), (std::vector<bool>{false, false, false}));
    EXPECT_EQ(mask(reject_by_rate(with_confidences({0.9, 0.55, 0.8, 0.51, 0.7}), 0.4)),
              (std::vector<bool>{false, true, false, true, false}));
    EXPECT_EQ(mask(reject_by_rate(with_confidences({0.8, 0.8, 0.8, 0.8}), 0.5)),
              (std::vector<bool>{true, true, false, false}));
    EXPECT_THROW(reject_by_rate(with_confidences({0.8}), 1.0), ValidationError);
    EXPECT_THROW(reject_by_rate(with_confidences({0.8}), -0.1), ValidationError);
}

TEST(RejectByRate, NestedAcrossRates) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> conf(1 + trial % 30);
        for (auto& c : conf) c = trial % 3 == 0 ? std::round(u(rng) * 10) / 10 : u(rng);  // some ties
        const auto recs = with_confidences(conf);
        std::vector<bool> prev(conf.size(), false);
        for (double r : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95}) {
            const auto m = mask(reject_by_rate(recs, r));
            for (std::size_t i = 0; i < m.size(); ++i)
                if (prev[i]) {
                    EXPECT_TRUE(m[i]);
                }
            EXPECT_EQ(static_cast<std::size_t>(std::count(m.begin(), m.end(), true)),
                      static_cast<std::size_t>(std::floor(r * static_cast<double>(conf.size()) + 1e-9)));
            prev = m;
        }
    }
}

TEST(RejectionAwareLabel, AbstainedReportsZero) {
    auto recs = reject_by_rate(with_confidences({0.6, 0.9}), 0.5);
    EXPECT_EQ(recs[0].rejection_aware_label(), 0);
    EXPECT_EQ(recs[1].rejection_aware_label(), -1);
}

TEST(IndexTrajectory, Examples) {
    const auto s = test::series("a", {{1, 9}, {2, 9}, {3, 9}}, Label::Positive, {1, 3, 4});
    const IndexTrajectory t = index_trajectory(post({1, 0}), s);
    ASSERT_EQ(t.points.size(), 3u);
    EXPECT_DOUBLE_EQ(t.points[0].mean, 1.0);
    EXPECT_DOUBLE_EQ(t.points[1].mean, 2.0);
    EXPECT_DOUBLE_EQ(t.points[2].mean, 3.0);
    EXPECT_EQ(t.points[1].t, 3);
    EXPECT_EQ(t.monotonicity_violations, 0);

    const IndexTrajectory z = index_trajectory(post({0, 0}), s);
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_DOUBLE_EQ(z.points[r].mean, 0.0);
        EXPECT_DOUBLE_EQ(z.points[r].std, s.visit(r).norm());
    }

    const auto down = test::series("b", {{3}, {2}}, Label::Negative);
    EXPECT_EQ(index_trajectory(post({1}), down).monotonicity_violations, 1);
}

TEST(PredictSubject, UsesLastVisit) {
    const auto s = test::series("a", {{-5.0}, {1.0}}, Label::Unobserved, {2, 7});
    const PredictionRecord r = predict_subject(post({2.0}), s);
    EXPECT_EQ(r.t_last, 7);
    EXPECT_EQ(r.predicted_label, 1);
    EXPECT_DOUBLE_EQ(r.index_mean, 2.0);
    EXPECT_DOUBLE_EQ(r.index_std, 1.0);
    EXPECT_DOUBLE_EQ(r.confidence, standard_normal_cdf(2.0));
    EXPECT_EQ(r.index_values, (std::vector<double>{-10.0, 2.0}));
}

TEST(PredictionCsv, RoundTrip) {
    std::mt19937_64 rng(2);
    const LongitudinalPanel p = test::random_panel(rng, 9, 3);
    const auto recs = reject_by_rate(predict_panel(WeightPosterior{Vector{{0.4, -0.1, 0.2}}}, p), 0.3);
    std::stringstream buf;
    write_predictions_csv(buf, recs);
    const auto back = read_predictions_csv(buf);
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].subject_id, recs[i].subject_id);
        EXPECT_EQ(back[i].abstained, recs[i].abstained);
        EXPECT_EQ(back[i].rejection_aware_label(), recs[i].rejection_aware_label());
        EXPECT_NEAR(back[i].confidence, recs[i].confidence, 1e-11);
    }
}
