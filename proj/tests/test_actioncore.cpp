#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "psi/actioncore/dataset.hpp"
#include "psi/actioncore/normalize.hpp"
#include "psi/actioncore/resample.hpp"
#include "psi/actioncore/rotation.hpp"
#include "psi/actioncore/types.hpp"
#include "psi/common/rng.hpp"

namespace fs = std::filesystem;
using namespace psi::actioncore;

namespace {

// Independent quantile oracle: explicit floor/ceil order statistics, written
// separately from the library's implementation.
double oracle_quantile(std::vector<double> xs, double p) {
    std::sort(xs.begin(), xs.end());
    const double h = p * (static_cast<double>(xs.size()) - 1.0);
    const auto i = static_cast<size_t>(h);
    const size_t j = std::min(i + 1, xs.size() - 1);
    const double w = h - static_cast<double>(i);
    return (1.0 - w) * xs[i] + w * xs[j];
}

// Independent rotation constructor for round-trip checks: Rodrigues formula
// from a random axis-angle.
Mat3 rodrigues(double ax, double ay, double az, double angle) {
    const double n = std::sqrt(ax * ax + ay * ay + az * az);
    ax /= n;
    ay /= n;
    az /= n;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double t = 1.0 - c;
    return {c + ax * ax * t,       ax * ay * t - az * s,  ax * az * t + ay * s,
            ay * ax * t + az * s,  c + ay * ay * t,       ay * az * t - ax * s,
            az * ax * t - ay * s,  az * ay * t + ax * s,  c + az * az * t};
}

// Independent Gram-Schmidt oracle in long double.
Mat3 oracle_gram_schmidt(const Rot6d& v) {
    long double a1[3] = {v[0], v[1], v[2]};
    long double a2[3] = {v[3], v[4], v[5]};
    long double n1 = std::sqrt(a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]);
    long double b1[3] = {a1[0] / n1, a1[1] / n1, a1[2] / n1};
    long double d = b1[0] * a2[0] + b1[1] * a2[1] + b1[2] * a2[2];
    long double u[3] = {a2[0] - d * b1[0], a2[1] - d * b1[1], a2[2] - d * b1[2]};
    long double n2 = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    long double b2[3] = {u[0] / n2, u[1] / n2, u[2] / n2};
    long double b3[3] = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
                         b1[0] * b2[1] - b1[1] * b2[0]};
    Mat3 R;
    for (int i = 0; i < 3; ++i) {
        R[static_cast<size_t>(3 * i)] = static_cast<double>(b1[i]);
        R[static_cast<size_t>(3 * i + 1)] = static_cast<double>(b2[i]);
        R[static_cast<size_t>(3 * i + 2)] = static_cast<double>(b3[i]);
    }
    return R;
}

Episode make_episode(int frames, int task_id = 3, ActionSpace space = ActionSpace::joint36,
                     int context_dim = 32, uint64_t seed = 99) {
    psi::Rng rng(seed);
    Episode ep;
    ep.task_id = task_id;
    ep.frame_rate = 30.0;
    ep.space = space;
    ep.context_dim = context_dim;
    const int adim = action_dim(space);
    for (int f = 0; f < frames; ++f) {
        std::vector<float> action(static_cast<size_t>(adim));
        std::vector<float> state(kProprioDims);
        std::vector<float> context(static_cast<size_t>(context_dim));
        for (auto& v : action) {
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        }
        if (space == ActionSpace::task48) {
            // Keep the 6D rotation blocks valid.
            for (int side = 0; side < 2; ++side) {
                const int base = side * kTaskSideDims + kWristRotOffset;
                action[static_cast<size_t>(base)] += 2.0f;
                action[static_cast<size_t>(base + 4)] += 2.0f;
            }
        }
        for (auto& v : state) {
            v = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
        for (auto& v : context) {
            v = static_cast<float>(rng.normal());
        }
        ep.actions.push_back(std::move(action));
        ep.states.push_back(std::move(state));
        ep.contexts.push_back(std::move(context));
    }
    return ep;
}

}  // namespace

TEST_CASE("joint action layout matches the declared index map") {
    JointAction a;
    for (int i = 0; i < kJointDims; ++i) {
        a[i] = static_cast<double>(i);
    }
    CHECK(a.hand()[0] == 0.0);
    CHECK(a.hand()[13] == 13.0);
    CHECK(a.arm()[0] == 14.0);
    CHECK(a.arm()[13] == 27.0);
    CHECK(a.torso_rpy()[0] == 28.0);
    CHECK(a.torso_rpy()[2] == 30.0);
    CHECK(a.base_height() == 31.0);
    CHECK(a.v_x() == 32.0);
    CHECK(a.v_y() == 33.0);
    CHECK(a.v_yaw() == 34.0);
    CHECK(a.p_yaw() == 35.0);

    // Serialization path uses the same order.
    const std::vector<float> row = row_from_joint_action(a);
    for (int i = 0; i < kJointDims; ++i) {
        CHECK(row[static_cast<size_t>(i)] == static_cast<float>(i));
    }
    const JointAction b = joint_action_from_row(row);
    CHECK(b.v == a.v);
}

TEST_CASE("validation rejects non-finite and malformed values") {
    JointAction a;
    a.validate();
    a[5] = std::nan("");
    CHECK_THROWS_AS(a.validate(), psi::DataError);

    TaskAction t;
    CHECK_THROWS_AS(t.validate(), psi::DataError);  // all-zero rotation blocks
    t[kWristRotOffset] = 1.0;
    t[kTaskSideDims + kWristRotOffset + 3] = 1.0;
    t.validate();

    Episode ep = make_episode(3);
    ep.frame_rate = 0.0;
    CHECK_THROWS_AS(ep.validate(), psi::DataError);
}

TEST_CASE("quantile stats on an even grid") {
    std::vector<double> grid(101);
    for (int i = 0; i <= 100; ++i) {
        grid[static_cast<size_t>(i)] = static_cast<double>(i);
    }
    const NormStats stats = fit_quantile_stats({grid});
    CHECK(stats.q01[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.q99[0] == doctest::Approx(99.0).epsilon(1e-12));
    CHECK(stats.degenerate[0] == 0);
}

TEST_CASE("constant dimension is degenerate") {
    const NormStats stats = fit_quantile_stats({{5.0, 5.0, 5.0, 5.0}});
    CHECK(stats.q01[0] == 5.0);
    CHECK(stats.q99[0] == 5.0);
    CHECK(stats.degenerate[0] == 1);
    CHECK(degenerate_dims(stats) == std::set<int>{0});
}

TEST_CASE("quantiles match the sort-based oracle on random data") {
    psi::Rng rng(2024);
    std::vector<double> xs(10);
    for (auto& x : xs) {
        x = rng.uniform(-3.0, 7.0);
    }
    const NormStats stats = fit_quantile_stats({xs});
    CHECK(stats.q01[0] == doctest::Approx(oracle_quantile(xs, 0.01)).epsilon(1e-14));
    CHECK(stats.q99[0] == doctest::Approx(oracle_quantile(xs, 0.99)).epsilon(1e-14));

    // Ordering independence.
    std::vector<double> shuffled = xs;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[0], shuffled[4]);
    const NormStats stats2 = fit_quantile_stats({shuffled});
    CHECK(stats2.q01[0] == stats.q01[0]);
    CHECK(stats2.q99[0] == stats.q99[0]);
}

TEST_CASE("quantile fitting rejects bad input") {
    CHECK_THROWS_WITH_AS(fit_quantile_stats({{1.0}}), "insufficient samples", psi::DataError);
    CHECK_THROWS_WITH_AS(fit_quantile_stats({{1.0, std::nan("")}}), "non-finite sample",
                         psi::DataError);
}

TEST_CASE("normalization endpoints, midpoint, clipping") {
    NormStats stats;
    stats.q01 = {-2.0};
    stats.q99 = {6.0};
    stats.degenerate = {0};
    stats.validate();

    CHECK(normalize({-2.0}, stats)[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(normalize({2.0}, stats)[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(normalize({6.0}, stats)[0] == doctest::Approx(1.0).epsilon(1e-15));
    // One full range above q99: clipped to exactly 1.
    CHECK(normalize({6.0 + 8.0}, stats)[0] == 1.0);
    CHECK(normalize({-2.0 - 8.0}, stats)[0] == -1.0);
}

TEST_CASE("normalize and denormalize are inverse inside the quantile range") {
    psi::Rng rng(5);
    NormStats stats;
    for (int d = 0; d < 8; ++d) {
        const double lo = rng.uniform(-4.0, 0.0);
        stats.q01.push_back(lo);
        stats.q99.push_back(lo + rng.uniform(0.5, 5.0));
        stats.degenerate.push_back(0);
    }
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(8);
        for (int d = 0; d < 8; ++d) {
            x[static_cast<size_t>(d)] = rng.uniform(stats.q01[static_cast<size_t>(d)],
                                                    stats.q99[static_cast<size_t>(d)]);
        }
        const std::vector<double> back = denormalize(normalize(x, stats), stats);
        for (int d = 0; d < 8; ++d) {
            CHECK(back[static_cast<size_t>(d)] ==
                  doctest::Approx(x[static_cast<size_t>(d)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("degenerate dimensions need a pad declaration") {
    NormStats stats;
    stats.q01 = {0.0, 5.0};
    stats.q99 = {1.0, 5.0};
    stats.degenerate = {0, 1};

    CHECK_THROWS_AS(normalize({0.5, 5.0}, stats), psi::DataError);
    const auto y = normalize({0.5, 5.0}, stats, {1});
    CHECK(y[1] == 0.0);
    const auto x = denormalize(y, stats, {1});
    CHECK(x[1] == 5.0);
}

TEST_CASE("rot6d of identity and a z rotation") {
    const Mat3 I = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const Rot6d vi = rot6d_from_matrix(I);
    CHECK(vi == Rot6d{1, 0, 0, 0, 1, 0});

    // 90 degrees about z.
    const Mat3 Rz = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    const Rot6d vz = rot6d_from_matrix(Rz);
    CHECK(vz == Rot6d{0, 1, 0, -1, 0, 0});
}

TEST_CASE("rot6d rejects a non-orthonormal matrix") {
    const Mat3 bad = {1, 0, 0, 0, 2, 0, 0, 0, 1};
    CHECK_THROWS_WITH_AS(rot6d_from_matrix(bad), "invalid rotation", psi::DataError);
}

TEST_CASE("matrix_from_rot6d analytic cases") {
    const Mat3 I = matrix_from_rot6d({1, 0, 0, 0, 1, 0});
    for (int i = 0; i < 9; ++i) {
        CHECK(I[static_cast<size_t>(i)] ==
              doctest::Approx(i % 4 == 0 ? 1.0 : 0.0).epsilon(1e-15));
    }
    // Scale on a1 and shear along b1 are removed by the projection.
    const Mat3 I2 = matrix_from_rot6d({2, 0, 0, 1, 1, 0});
    for (int i = 0; i < 9; ++i) {
        CHECK(I2[static_cast<size_t>(i)] ==
              doctest::Approx(i % 4 == 0 ? 1.0 : 0.0).epsilon(1e-15));
    }
}

TEST_CASE("matrix_from_rot6d matches the oracle on a general input") {
    const Rot6d v = {0.3, 0.4, 0.5, -0.2, 0.9, 0.1};
    const Mat3 R = matrix_from_rot6d(v);
    const Mat3 expect = oracle_gram_schmidt(v);
    for (int i = 0; i < 9; ++i) {
        CHECK(R[static_cast<size_t>(i)] ==
              doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-12));
    }
    CHECK(is_rotation_matrix(R, 1e-9));
}

TEST_CASE("matrix_from_rot6d rejects degenerate input") {
    CHECK_THROWS_WITH_AS(matrix_from_rot6d({0, 0, 0, 0, 1, 0}), "degenerate 6D rotation",
                         psi::DataError);
    CHECK_THROWS_WITH_AS(matrix_from_rot6d({1, 0, 0, 2, 0, 0}), "degenerate 6D rotation",
                         psi::DataError);
}

TEST_CASE("rotation round trip over random rotations") {
    psi::Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const Mat3 R = rodrigues(rng.normal(), rng.normal(), rng.normal(),
                                 rng.uniform(-3.1, 3.1));
        REQUIRE(is_rotation_matrix(R, 1e-9));
        const Mat3 back = matrix_from_rot6d(rot6d_from_matrix(R));
        double max_err = 0.0;
        for (int i = 0; i < 9; ++i) {
            max_err = std::max(max_err, std::abs(back[static_cast<size_t>(i)] -
                                                 R[static_cast<size_t>(i)]));
        }
        CHECK(max_err < 1e-9);
        const double det = back[0] * (back[4] * back[8] - back[5] * back[7]) -
                           back[1] * (back[3] * back[8] - back[5] * back[6]) +
                           back[2] * (back[3] * back[7] - back[4] * back[6]);
        CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("upsampling by 3 interpolates linearly") {
    Episode ep = make_episode(2);
    ep.frame_rate = 10.0;
    ep.actions[0][0] = 0.0f;
    ep.actions[1][0] = 3.0f;
    const Episode out = resample_episode(ep, {3, 1});
    REQUIRE(out.frames() == 4);
    CHECK(out.frame_rate == doctest::Approx(30.0));
    CHECK(out.actions[0][0] == 0.0f);
    CHECK(out.actions[1][0] == 1.0f);
    CHECK(out.actions[2][0] == 2.0f);
    CHECK(out.actions[3][0] == 3.0f);
    // Endpoints are bit-exact copies across every channel.
    CHECK(out.actions.front() == ep.actions.front());
    CHECK(out.actions.back() == ep.actions.back());
    CHECK(out.contexts.front() == ep.contexts.front());
    CHECK(out.contexts.back() == ep.contexts.back());
}

TEST_CASE("unit factor returns the identical episode") {
    const Episode ep = make_episode(7);
    CHECK(resample_episode(ep, {1, 1}) == ep);
    CHECK(resample_episode(ep, {2, 2}) == ep);
}

TEST_CASE("downsample picks exact grid frames") {
    Episode ep = make_episode(4);
    const Episode out = resample_episode(ep, {1, 3});
    REQUIRE(out.frames() == 2);
    CHECK(out.actions[0] == ep.actions[0]);
    CHECK(out.actions[1] == ep.actions[3]);
    CHECK(out.frame_rate == doctest::Approx(10.0));
}

TEST_CASE("invalid factors are rejected") {
    const Episode ep = make_episode(4);
    CHECK_THROWS_AS(resample_episode(ep, {0, 1}), psi::ConfigError);
    CHECK_THROWS_AS(resample_episode(ep, {-3, 1}), psi::ConfigError);
    CHECK(Rational::parse("3").value() == doctest::Approx(3.0));
    CHECK(Rational::parse("1/3").value() == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(Rational::parse("x"), psi::ConfigError);
}

TEST_CASE("sinusoid down-up round trip stays within the interpolation bound") {
    // 30 Hz sinusoid, down to 10 Hz, back up by 3.
    const int n = 91;
    Episode ep = make_episode(n, 1, ActionSpace::joint36, 4, 123);
    ep.frame_rate = 30.0;
    for (int f = 0; f < n; ++f) {
        const double t = static_cast<double>(f) / 30.0;
        ep.actions[static_cast<size_t>(f)][0] =
            static_cast<float>(std::sin(2.0 * 3.14159265358979323846 * 1.0 * t));
    }
    const Episode down = resample_episode(ep, {1, 3});
    const Episode up = resample_episode(down, {3, 1});
    REQUIRE(up.frames() == ep.frames());

    // Shared grid points (every third frame) are exact.
    for (size_t f = 0; f < up.frames(); f += 3) {
        CHECK(up.actions[f][0] == ep.actions[f][0]);
    }

    // Interpolation error bound from the second differences of the original
    // signal: chord deviation over a 3-step interval is at most (3^2/8) times
    // the max second difference, plus float32 rounding slack.
    double max_dd = 0.0;
    for (int f = 1; f + 1 < n; ++f) {
        const double dd = std::abs(static_cast<double>(ep.actions[static_cast<size_t>(f + 1)][0]) -
                                   2.0 * static_cast<double>(ep.actions[static_cast<size_t>(f)][0]) +
                                   static_cast<double>(ep.actions[static_cast<size_t>(f - 1)][0]));
        max_dd = std::max(max_dd, dd);
    }
    double max_err = 0.0;
    for (size_t f = 0; f < up.frames(); ++f) {
        max_err = std::max(max_err, std::abs(static_cast<double>(up.actions[f][0]) -
                                             static_cast<double>(ep.actions[f][0])));
    }
    CHECK(max_err > 0.0);
    CHECK(max_err <= 9.0 / 8.0 * max_dd * 1.05 + 1e-6);
}

TEST_CASE("padding to the full joint layout") {
    const std::vector<double> zeros(kUpperBodyDims, 0.0);
    const JointAction neutral = pad_to_joint36(zeros);
    CHECK(neutral.base_height() == 0.75);
    for (int i = 0; i < kJointDims; ++i) {
        if (i != kBaseHeightIndex) {
            CHECK(neutral[i] == 0.0);
        }
    }

    psi::Rng rng(8);
    std::vector<double> upper(kUpperBodyDims);
    for (auto& v : upper) {
        v = rng.uniform(-1.5, 1.5);
    }
    const JointAction padded = pad_to_joint36(upper, 0.6);
    for (int i = 0; i < kUpperBodyDims; ++i) {
        CHECK(padded[i] == upper[static_cast<size_t>(i)]);
    }
    CHECK(padded.base_height() == 0.6);
    CHECK(strip_to_upper28(padded) == upper);

    CHECK_THROWS_AS(pad_to_joint36(std::vector<double>(27, 0.0)), psi::DataError);
}

TEST_CASE("dataset with zero episodes") {
    const fs::path p = fs::temp_directory_path() / "psi_ds_empty.bin";
    write_dataset(p, {});
    CHECK(read_dataset(p).empty());
    fs::remove(p);
}

TEST_CASE("dataset round trip is bit-exact") {
    const fs::path p = fs::temp_directory_path() / "psi_ds_rt.bin";
    const std::vector<Episode> eps = {
        make_episode(5, 3, ActionSpace::joint36, 32, 7),
        make_episode(9, 1, ActionSpace::task48, 16, 8),
    };
    write_dataset(p, eps);
    const std::vector<Episode> back = read_dataset(p);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == eps[0]);
    CHECK(back[1] == eps[1]);
    fs::remove(p);
}

TEST_CASE("dataset read failures are distinct") {
    const fs::path p = fs::temp_directory_path() / "psi_ds_bad.bin";
    const std::vector<Episode> eps = {make_episode(5)};
    write_dataset(p, eps);

    auto slurp = [&] {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    auto spit = [&](const std::string& bytes) {
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    const std::string good = slurp();

    SUBCASE("truncated blob") {
        spit(good.substr(0, good.size() - 10));
        CHECK_THROWS_WITH_AS(read_dataset(p), "truncated file", psi::DataError);
    }
    SUBCASE("version mismatch") {
        std::string bad = good;
        const auto pos = bad.find("version 1");
        REQUIRE(pos != std::string::npos);
        bad[pos + 8] = '2';
        spit(bad);
        CHECK_THROWS_WITH_AS(read_dataset(p), "unsupported dataset version 2, expected 1",
                             psi::DataError);
    }
    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        spit(bad);
        CHECK_THROWS_AS(read_dataset(p), psi::DataError);
    }
    SUBCASE("invariant violation in header") {
        std::string bad = good;
        const auto pos = bad.find("\"frame_rate\":30.0");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 17, "\"frame_rate\":-1.0");
        spit(bad);
        CHECK_THROWS_WITH_AS(read_dataset(p), "episode frame_rate must be positive",
                             psi::DataError);
    }
    fs::remove(p);
}
