#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace uqchi;
using uqchi::test::series;

namespace {

template <class Fn>
std::string error_code(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

LongitudinalPanel ten_subjects() {
    std::vector<SubjectSeries> s;
    for (int i = 0; i < 10; ++i)
        s.push_back(series("s" + std::to_string(i), {{double(i), 1.0}, {double(i) + 1.0, 2.0}},
                           i % 2 ? Label::Positive : Label::Negative));
    return LongitudinalPanel(std::move(s));
}

}  // namespace

TEST(LoadPanel, TwoSubjectsOneUnobserved) {
    std::istringstream in(
        "subject_id,t,label,f1,f2\n"
        "a,1,+1,0.5,1\n"
        "a,2,+1,0.7,1\n"
        "a,3,+1,0.9,1\n"
        "b,1,,1,0\n"
        "b,2,,2,0\n"
        "b,4,,3,0\n");
    const LongitudinalPanel p = read_panel_csv(in);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p.dim(), 2);
    EXPECT_EQ(p.subject(0).label, Label::Positive);
    EXPECT_EQ(p.subject(1).label, Label::Unobserved);
    EXPECT_EQ(p.count(Label::Unobserved), 1u);
    EXPECT_EQ(p.subject(1).times, (std::vector<int>{1, 2, 4}));
    EXPECT_DOUBLE_EQ(p.subject(0).observations(2, 0), 0.9);
}

TEST(LoadPanel, DuplicateTimeIndex) {
    std::istringstream in("subject_id,t,label,f1\ns1,1,1,0\ns1,2,1,1\ns1,2,1,2\n");
    EXPECT_EQ(error_code([&] { read_panel_csv(in); }), "DuplicateTimeIndex");
}

TEST(LoadPanel, SingleRowSubjectHasNoMonotonicityTerms) {
    std::istringstream in("subject_id,t,label,f1,f2\ns1,4,-1,2,3\n");
    const LongitudinalPanel p = read_panel_csv(in);
    ASSERT_EQ(p.subject(0).visit_count(), 1u);
    EXPECT_EQ(step_differences(p.subject(0)).rows(), 0);
    const auto agg = make_aggregate(p.subject(0), -1.0);
    EXPECT_TRUE(agg.monotone_sum.isZero(0.0));
}

TEST(LoadPanel, RowsAreSortedByTime) {
    std::istringstream in("subject_id,t,label,f1\ns1,3,1,3\ns1,1,1,1\ns1,2,1,2\n");
    const LongitudinalPanel p = read_panel_csv(in);
    EXPECT_EQ(p.subject(0).times, (std::vector<int>{1, 2, 3}));
    EXPECT_DOUBLE_EQ(p.subject(0).observations(0, 0), 1.0);
}

TEST(LoadPanel, SchemaErrors) {
    auto code = [](const std::string& text, CsvSchema schema = {}) {
        std::istringstream in(text);
        return error_code([&] { read_panel_csv(in, schema); });
    };
    EXPECT_EQ(code("subject_id,label,f1\na,1,0\n"), "BadHeader");
    EXPECT_EQ(code("subject_id,t,label,f1\na,x,1,0\n"), "BadTime");
    EXPECT_EQ(code("subject_id,t,label,f1\na,1,2,0\n"), "BadLabel");
    EXPECT_EQ(code("subject_id,t,label,f1\na,1,1,abc\n"), "NonNumericFeature");
    EXPECT_EQ(code("subject_id,t,label,f1\na,1,1,0\na,2,-1,0\n"), "ConflictingLabels");
    EXPECT_EQ(code("subject_id,t,label,f1,f2\na,1,1,0\n"), "DimensionMismatch");
    EXPECT_EQ(code(""), "BadHeader");
    EXPECT_EQ(error_code([] { load_panel("/nonexistent/panel.csv"); }), "FileNotFound");
}

TEST(LoadPanel, CustomSchema) {
    std::istringstream in("id,visit,dx,age,score,extra\nq,1,1,70,3,9\nq,2,1,71,4,9\n");
    CsvSchema schema{"id", "visit", "dx", {"score", "age"}};
    const LongitudinalPanel p = read_panel_csv(in, schema);
    EXPECT_EQ(p.dim(), 2);
    EXPECT_DOUBLE_EQ(p.subject(0).observations(1, 0), 4.0);
    EXPECT_DOUBLE_EQ(p.subject(0).observations(1, 1), 71.0);
}

TEST(LoadPanel, WriteReadRoundTrip) {
    std::mt19937_64 rng(7);
    const LongitudinalPanel p = test::random_panel(rng, 12, 3);
    std::stringstream buf;
    write_panel_csv(buf, p);
    const LongitudinalPanel q = read_panel_csv(buf);
    ASSERT_EQ(q.size(), p.size());
    for (std::size_t n = 0; n < p.size(); ++n) {
        EXPECT_EQ(q.subject(n).subject_id, p.subject(n).subject_id);
        EXPECT_EQ(q.subject(n).label, p.subject(n).label);
        EXPECT_EQ(q.subject(n).times, p.subject(n).times);
        EXPECT_TRUE(q.subject(n).observations == p.subject(n).observations);
    }
}

TEST(PanelValidation, RejectsBadSeries) {
    EXPECT_EQ(error_code([] { LongitudinalPanel(std::vector<SubjectSeries>{}); }), "EmptyPanel");
    EXPECT_EQ(error_code([] {
                  LongitudinalPanel({series("a", {{1.0}}, Label::Positive), series("b", {{1.0, 2.0}}, Label::Positive)});
              }),
              "DimensionMismatch");
    EXPECT_EQ(error_code([] { LongitudinalPanel({series("a", {{1.0}, {2.0}}, Label::Positive, {2, 1})}); }),
              "UnorderedTimes");
    EXPECT_EQ(error_code([] { LongitudinalPanel({series("a", {{1.0}, {2.0}}, Label::Positive, {1, 1})}); }),
              "DuplicateTimeIndex");
    EXPECT_EQ(error_code([] { LongitudinalPanel({series("a", {{std::nan("")}}, Label::Positive)}); }),
              "NonFiniteFeature");
}

TEST(ExpectedLabel, Examples) {
    const LongitudinalPanel p({series("a", {{0.0}}, Label::Positive), series("b", {{0.0}}, Label::Unobserved),
                               series("c", {{0.0}}, Label::Negative)});
    const LabelPrior half = make_label_prior(p);
    EXPECT_DOUBLE_EQ(expected_label(half, 0), 1.0);
    EXPECT_DOUBLE_EQ(expected_label(half, 1), 0.0);
    EXPECT_DOUBLE_EQ(expected_label(half, 2), -1.0);
    const LabelPrior soft = make_label_prior(p, 0.8);
    EXPECT_NEAR(expected_label(soft, 1), 0.6, 1e-15);
    EXPECT_EQ(error_code([&] { make_label_prior(p, 1.5); }), "BadPrior");
}

TEST(ExpectedLabel, MonotoneAndAffineInPrior) {
    const LongitudinalPanel p({series("a", {{0.0}}, Label::Unobserved)});
    double prev = -2.0;
    for (int i = 0; i <= 20; ++i) {
        const double q = i / 20.0;
        const double y = expected_label(make_label_prior(p, q), 0);
        EXPECT_GT(y, prev);
        EXPECT_NEAR(y, 2.0 * q - 1.0, 1e-15);
        prev = y;
    }
}

TEST(Aggregates, Examples) {
    const LongitudinalPanel p({series("a", {{1, 0}, {2, 0}, {4, 0}}, Label::Positive),
                               series("b", {{2, 3}}, Label::Negative),
                               series("c", {{0, 0}, {1, 1}}, Label::Unobserved)});
    const auto a = aggregates(p, make_label_prior(p));
    ASSERT_EQ(a.size(), 3u);
    EXPECT_TRUE(a[0].value.isApprox(Vector{{7.0, 0.0}}));
    EXPECT_TRUE(a[1].value.isApprox(Vector{{-2.0, -3.0}}));
    EXPECT_TRUE(a[2].value.isApprox(Vector{{1.0, 1.0}}));
}

TEST(Aggregates, Telescoping) {
    std::mt19937_64 rng(11);
    const LongitudinalPanel p = test::random_panel(rng, 40, 5, 8);
    for (const auto& s : p.subjects()) {
        const auto agg = make_aggregate(s, 0.0);
        const Matrix z = step_differences(s);
        Vector in_order = Vector::Zero(s.dim());
        for (Eigen::Index t = 0; t < z.rows(); ++t) in_order += z.row(t).transpose();
        EXPECT_TRUE(agg.monotone_sum == in_order);  // bitwise, same summation order
        EXPECT_LE((agg.monotone_sum - (s.last_visit() - s.first_visit())).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Standardization, RoundTrip) {
    std::mt19937_64 rng(5);
    const LongitudinalPanel p = test::random_panel(rng, 30, 4, 5);
    for (ScaleMode mode : {ScaleMode::UnitVariance, ScaleMode::UnitNorm}) {
        const auto [std_panel, stats] = standardize(p, mode);
        const LongitudinalPanel back = destandardize(std_panel);
        for (std::size_t n = 0; n < p.size(); ++n)
            EXPECT_LE((back.subject(n).observations - p.subject(n).observations).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Standardization, Moments) {
    std::mt19937_64 rng(6);
    const LongitudinalPanel p = test::random_panel(rng, 50, 3, 4);
    const LongitudinalPanel u = standardize(p, ScaleMode::UnitVariance).first;
    const LongitudinalPanel q = standardize(p, ScaleMode::UnitNorm).first;
    Vector mean = Vector::Zero(3), sq = Vector::Zero(3);
    double norm_sq = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        for (Eigen::Index r = 0; r < u.subject(n).observations.rows(); ++r) {
            mean += u.subject(n).observations.row(r).transpose();
            sq += u.subject(n).observations.row(r).transpose().cwiseAbs2();
            norm_sq += q.subject(n).observations.row(r).squaredNorm();
        }
    }
    const double count = static_cast<double>(p.observation_count());
    EXPECT_LE((mean / count).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((sq / count - Vector::Ones(3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(norm_sq / count, 1.0, 1e-12);
}

TEST(Standardization, ConstantFeatureKeepsUnitScale) {
    const LongitudinalPanel p({series("a", {{1, 5}, {2, 5}}, Label::Positive), series("b", {{3, 5}}, Label::Negative)});
    const Standardization st = fit_standardization(p, ScaleMode::UnitVariance);
    EXPECT_DOUBLE_EQ(st.scale[1], 1.0);
    EXPECT_DOUBLE_EQ(st.mean[1], 5.0);
}

TEST(Standardization, JsonRoundTrip) {
    const Standardization st{Vector{{1.5, -2.0}}, Vector{{0.25, 3.0}}};
    const Standardization back = standardization_from_json(nlohmann::json::parse(to_json(st).dump()));
    EXPECT_TRUE(back.mean == st.mean);
    EXPECT_TRUE(back.scale == st.scale);
    EXPECT_EQ(scale_mode_from_name("unit_norm"), ScaleMode::UnitNorm);
    EXPECT_EQ(error_code([] { scale_mode_from_name("zscore"); }), "BadScaleMode");
}

TEST(SplitAndMask, Counting) {
    const LongitudinalPanel p = ten_subjects();
    const PanelSplit a = split_and_mask(p, 0.7, 0.0, 3);
    EXPECT_EQ(a.train.size(), 7u);
    EXPECT_EQ(a.test.size(), 3u);
    EXPECT_EQ(a.train.labeled_count(), 7u);

    const PanelSplit b = split_and_mask(p, 0.8, 0.5, 3);
    ASSERT_EQ(b.train.size(), 8u);
    EXPECT_EQ(b.train.count(Label::Unobserved), 4u);
    EXPECT_EQ(b.test.labeled_count(), b.test.size());
}

TEST(SplitAndMask, Deterministic) {
    const LongitudinalPanel p = ten_subjects();
    const PanelSplit a = split_and_mask(p, 0.6, 0.5, 42);
    const PanelSplit b = split_and_mask(p, 0.6, 0.5, 42);
    EXPECT_EQ(a.train_index, b.train_index);
    for (std::size_t n = 0; n < a.train.size(); ++n) EXPECT_EQ(a.train.subject(n).label, b.train.subject(n).label);
}

TEST(SplitAndMask, PartitionProperty) {
    std::mt19937_64 rng(9);
    const LongitudinalPanel p = test::random_panel(rng, 37, 2);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const PanelSplit s = split_and_mask(p, 0.3 + 0.01 * static_cast<double>(seed), 0.5, seed);
        std::set<std::string> train_ids, test_ids;
        for (const auto& x : s.train.subjects()) train_ids.insert(x.subject_id);
        for (const auto& x : s.test.subjects()) test_ids.insert(x.subject_id);
        EXPECT_EQ(train_ids.size() + test_ids.size(), p.size());
        std::vector<std::string> common;
        std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(),
                              std::back_inserter(common));
        EXPECT_TRUE(common.empty());
    }
}

TEST(SplitAndMask, MasksAreNestedInFraction) {
    const LongitudinalPanel p = ten_subjects();
    std::set<std::string> prev;
    for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const PanelSplit s = split_and_mask(p, 0.8, f, 17);
        std::set<std::string> masked;
        for (const auto& x : s.train.subjects())
            if (!is_observed(x.label)) masked.insert(x.subject_id);
        EXPECT_TRUE(std::includes(masked.begin(), masked.end(), prev.begin(), prev.end()));
        prev = masked;
    }
}

TEST(SplitAndMask, Errors) {
    const LongitudinalPanel p = ten_subjects();
    EXPECT_EQ(error_code([&] { split_and_mask(p, 1.5, 0.0, 1); }), "BadFraction");
    EXPECT_EQ(error_code([&] { split_and_mask(p, 0.01, 0.0, 1); }), "EmptySplit");
    EXPECT_EQ(error_code([&] { split_and_mask(p, 0.99, 0.0, 1); }), "EmptySplit");
}
