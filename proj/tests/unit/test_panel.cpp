#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "spillbreak/panel.hpp"

using namespace spillbreak;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / ("spillbreak_test_" + name);
    std::ofstream(p) << body;
    return p;
}

const char* kTwoByThree =
    "unit,time,y,x,z\n"
    "a,1,1,0.5,2\n"
    "a,2,2,0.5,2\n"
    "a,3,3,0.5,2\n"
    "b,1,4,1,0\n"
    "b,2,5,1,0\n"
    "b,3,6,1,0\n";

}  // namespace

TEST_CASE("load_csv reads a complete grid") {
    const PanelData p = load_csv(write_temp("ok.csv", kTwoByThree));
    CHECK(p.n_units() == 2);
    CHECK(p.n_periods() == 3);
    CHECK(p.unit_labels() == std::vector<std::string>{"a", "b"});
    CHECK(p.times() == std::vector<long long>{1, 2, 3});
    CHECK(p.y()(1, 2) == 6.0);
    CHECK(p.x()(0, 0) == 0.5);
}

TEST_CASE("load_csv orders units by first appearance and sorts times") {
    const PanelData p = load_csv(write_temp("order.csv",
                                            "unit,time,y,x,z\n"
                                            "z9,5,1,1,1\n"
                                            "a1,5,2,1,1\n"
                                            "z9,2,3,1,1\n"
                                            "a1,2,4,1,1\n"));
    CHECK(p.unit_labels() == std::vector<std::string>{"z9", "a1"});
    CHECK(p.times() == std::vector<long long>{2, 5});
    CHECK(p.y()(0, 0) == 3.0);
    CHECK(p.y()(1, 1) == 2.0);
}

TEST_CASE("load_csv names the first missing cell") {
    const PanelData ok = load_csv(write_temp("ints.csv",
                                             "unit,time,y,x,z\n1,1,0,0,0\n1,2,0,0,0\n1,3,0,0,0\n"
                                             "2,1,0,0,0\n2,2,0,0,0\n2,3,0,0,0\n"));
    CHECK(ok.n_units() == 2);
    const auto path = write_temp("missing.csv",
                                 "unit,time,y,x,z\n1,1,0,0,0\n1,2,0,0,0\n1,3,0,0,0\n"
                                 "2,1,0,0,0\n2,2,0,0,0\n");
    try {
        load_csv(path);
        FAIL("expected BalancedPanelError");
    } catch (const BalancedPanelError& e) {
        CHECK(e.unit() == "2");
        CHECK(e.time() == 3);
    }
}

TEST_CASE("load_csv reports the row of a non-numeric field") {
    const auto path = write_temp("abc.csv", "unit,time,y,x,z\n1,1,0,0,0\n1,2,0,0,0\n1,3,abc,0,0\n");
    try {
        load_csv(path);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 4);
    }
    CHECK_THROWS_AS(load_csv(write_temp("hdr.csv", "u,t,y,x,z\n1,1,0,0,0\n")), ParseError);
    CHECK_THROWS_AS(load_csv(write_temp("dup.csv", "unit,time,y,x,z\n1,1,0,0,0\n1,1,0,0,0\n")), ParseError);
    CHECK_THROWS_AS(load_csv(fs::temp_directory_path() / "spillbreak_no_such_file.csv"), IoError);
}

TEST_CASE("write_csv round-trips exactly") {
    const PanelData p = oracle::random_panel(3, 7, 11);
    const fs::path path = fs::temp_directory_path() / "spillbreak_test_roundtrip.csv";
    write_csv(p, path);
    const PanelData q = load_csv(path);
    CHECK(q.y() == p.y());
    CHECK(q.x() == p.x());
    CHECK(q.z() == p.z());
}

TEST_CASE("PanelData validates shape and finiteness") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(PanelData(a, Eigen::MatrixXd::Zero(2, 4), a), InvalidPanel);
    Eigen::MatrixXd bad = a;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(PanelData(bad, a, a), InvalidPanel);
    CHECK_THROWS_AS(require_estimable(PanelData(a, a, a)), InvalidPanel);
    const Eigen::MatrixXd big = Eigen::MatrixXd::Zero(2, 8);
    CHECK_NOTHROW(require_estimable(PanelData(big, big, big)));
}

TEST_CASE("demean_within examples") {
    Eigen::MatrixXd y(2, 3);
    y << 1, 2, 3, 5, 5, 5;
    const PanelData p(y, y, y);
    const PanelData d = demean_within(p);
    CHECK(d.y()(0, 0) == doctest::Approx(-1.0));
    CHECK(d.y()(0, 1) == doctest::Approx(0.0));
    CHECK(d.y()(0, 2) == doctest::Approx(1.0));
    CHECK(d.y().row(1).norm() == 0.0);
    const PanelData twice = demean_within(d);
    CHECK((twice.y() - d.y()).norm() < 1e-15);
}

TEST_CASE("demean_outcome touches only the outcome") {
    const PanelData p = oracle::random_panel(3, 9, 21);
    const PanelData d = demean_outcome(p);
    CHECK(d.y().rowwise().mean().cwiseAbs().maxCoeff() < 1e-15);
    CHECK(d.x() == p.x());
    CHECK(d.z() == p.z());
    CHECK((d.y() - p.y()).colwise().norm().maxCoeff() > 0.0);
}

TEST_CASE("demean_within matches dummy-variable OLS slopes") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 2 + rep % 3;
        const int periods = 6 + rep % 5;
        PanelData raw = oracle::random_panel(n, periods, 100 + rep);
        // Add unit-level shifts that the dummies should absorb.
        Eigen::MatrixXd y = raw.y(), x = raw.x(), z = raw.z();
        for (int i = 0; i < n; ++i) {
            y.row(i).array() += 3.0 * i - 1.0;
            z.row(i).array() += 0.5 * i;
        }
        raw = PanelData(y, x, z);
        const PanelData dm = demean_within(raw);

        // Pooled regression of y on (z, x_1) across units with unit dummies.
        const int rows = n * periods;
        Eigen::MatrixXd dummies = Eigen::MatrixXd::Zero(rows, n + 2);
        Eigen::MatrixXd within(rows, 2);
        Eigen::VectorXd resp(rows), resp_dm(rows);
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < periods; ++t) {
                const int r = i * periods + t;
                dummies(r, i) = 1.0;
                dummies(r, n) = raw.z()(i, t);
                dummies(r, n + 1) = raw.x()(0, t);
                within(r, 0) = dm.z()(i, t);
                within(r, 1) = dm.x()(0, t);
                resp(r) = raw.y()(i, t);
                resp_dm(r) = dm.y()(i, t);
            }
        const Eigen::VectorXd full = dummies.colPivHouseholderQr().solve(resp);
        // x_1 demeaned per unit equals x_1 minus its own mean, identical in every unit block.
        const Eigen::VectorXd slopes = within.colPivHouseholderQr().solve(resp_dm);
        CHECK(std::abs(full(n) - slopes(0)) < 1e-8);
        CHECK(std::abs(full(n + 1) - slopes(1)) < 1e-8);

        // Per-unit version with an explicit intercept column.
        Eigen::MatrixXd d_raw(periods, 2), d_dm(periods, 2);
        for (int t = 0; t < periods; ++t) {
            d_raw(t, 0) = raw.x()(0, t);
            d_raw(t, 1) = raw.z()(0, t);
            d_dm(t, 0) = dm.x()(0, t);
            d_dm(t, 1) = dm.z()(0, t);
        }
        const Eigen::VectorXd a = oracle::dummy_ols(d_raw, raw.y().row(0).transpose());
        const Eigen::VectorXd b = d_dm.colPivHouseholderQr().solve(dm.y().row(0).transpose());
        CHECK((a - b).norm() < 1e-8);
    }
}

TEST_CASE("build_regime_design places x by regime") {
    const PanelData p = oracle::random_panel(2, 4, 3);
    const RegimeDesign d = build_regime_design(p, 2, false);
    CHECK(d.regressor_count() == 5);
    // Second period (t = 1, pre-break) of unit 0.
    CHECK(d.row(0, 1)(0) == p.x()(0, 1));
    CHECK(d.row(0, 1)(1) == p.x()(1, 1));
    CHECK(d.row(0, 1)(2) == 0.0);
    CHECK(d.row(0, 1)(3) == 0.0);
    CHECK(d.row(0, 1)(4) == p.z()(0, 1));
    // Third period (t = 2, post-break).
    CHECK(d.row(1, 2)(0) == 0.0);
    CHECK(d.row(1, 2)(2) == p.x()(0, 2));
    CHECK(d.row(1, 2)(3) == p.x()(1, 2));
    CHECK(d.row(1, 2)(4) == p.z()(1, 2));

    const RegimeDesign s = build_regime_design(p, 2, true);
    CHECK(s.regressor_count() == 6);
    CHECK(s.row(0, 2)(4) == 0.0);
    CHECK(s.row(0, 2)(5) == p.z()(0, 2));
    CHECK(s.row(0, 0)(4) == p.z()(0, 0));

    CHECK_THROWS_AS(build_regime_design(p, 0, false), InvalidBreakpoint);
    CHECK_THROWS_AS(build_regime_design(p, 4, false), InvalidBreakpoint);
}

TEST_CASE("regime designs at two breakpoints differ only between them") {
    const PanelData p = oracle::random_panel(3, 10, 8);
    for (int b1 = 1; b1 < 10; ++b1)
        for (int b2 = 1; b2 < 10; ++b2) {
            const RegimeDesign d1 = build_regime_design(p, b1, true);
            const RegimeDesign d2 = build_regime_design(p, b2, true);
            for (int i = 0; i < 3; ++i)
                for (int t = 0; t < 10; ++t) {
                    const bool between = t >= std::min(b1, b2) && t < std::max(b1, b2);
                    const bool same = (d1.row(i, t) - d2.row(i, t)).norm() == 0.0;
                    CHECK(same != between);
                }
        }
}

TEST_CASE("split_regimes examples") {
    const SampleSplit a = split_regimes(8, 4);
    CHECK(a.main == std::vector<int>{0, 1, 4, 5});
    CHECK(a.aux == std::vector<int>{2, 3, 6, 7});
    const SampleSplit b = split_regimes(9, 4);
    CHECK(b.main == std::vector<int>{0, 1, 4, 5, 6});
    CHECK(b.aux == std::vector<int>{2, 3, 7, 8});
    CHECK_THROWS_AS(split_regimes(4, 1), RegimeTooShort);
}

TEST_CASE("split_regimes is a balanced partition") {
    for (int periods = 4; periods <= 40; ++periods)
        for (int b = 2; b <= periods - 2; ++b) {
            const SampleSplit s = split_regimes(periods, b);
            std::set<int> all(s.main.begin(), s.main.end());
            for (int t : s.aux) CHECK(all.insert(t).second);
            CHECK(static_cast<int>(all.size()) == periods);
            CHECK(*all.begin() == 0);
            CHECK(*all.rbegin() == periods - 1);
            auto count_pre = [b](const std::vector<int>& v) {
                return static_cast<int>(std::count_if(v.begin(), v.end(), [b](int t) { return t < b; }));
            };
            const int main_pre = count_pre(s.main), aux_pre = count_pre(s.aux);
            const int main_post = static_cast<int>(s.main.size()) - main_pre;
            const int aux_post = static_cast<int>(s.aux.size()) - aux_pre;
            CHECK(std::abs(main_pre - aux_pre) <= 1);
            CHECK(std::abs(main_post - aux_post) <= 1);
        }
}

TEST_CASE("slice_periods keeps labels and times") {
    const PanelData p = oracle::random_panel(2, 10, 4);
    const PanelData s = p.slice_periods(3, 4);
    CHECK(s.n_periods() == 4);
    CHECK(s.times() == std::vector<long long>{4, 5, 6, 7});
    CHECK(s.y() == p.y().middleCols(3, 4));
    CHECK_THROWS_AS(p.slice_periods(8, 4), InvalidArgument);
}
