#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "mixtg/metrics.hpp"
#include "mixtg/rng.hpp"
#include "mixtg/skeleton.hpp"
#include "mixtg/synth.hpp"
#include "oracles.hpp"

using namespace mixtg;

namespace {

PoseSequence random_pose(Rng& rng, std::int64_t frames, std::int64_t joints, double extent,
                         SeqKind kind = SeqKind::Gt3d) {
    auto s = PoseSequence::make(kind, frames, joints);
    for (auto& v : s.values) v = rng.uniform(-extent, extent);
    return s;
}

std::array<double, 9> random_rotation(Rng& rng) {
    // Rodrigues from a random axis and angle.
    double ux = rng.normal(), uy = rng.normal(), uz = rng.normal();
    const double n = std::sqrt(ux * ux + uy * uy + uz * uz);
    ux /= n;
    uy /= n;
    uz /= n;
    const double a = rng.uniform(0.2, 3.0);
    const double c = std::cos(a), s = std::sin(a), omc = 1 - c;
    return {c + ux * ux * omc,      ux * uy * omc - uz * s, ux * uz * omc + uy * s,
            uy * ux * omc + uz * s, c + uy * uy * omc,      uy * uz * omc - ux * s,
            uz * ux * omc - uy * s, uz * uy * omc + ux * s, c + uz * uz * omc};
}

PoseSequence transform(const PoseSequence& s, const std::array<double, 9>& r, double scale,
                       const std::array<double, 3>& t) {
    auto out = s;
    for (std::int64_t f = 0; f < s.frames; ++f) {
        for (std::int64_t j = 0; j < s.joints; ++j) {
            const double x = s.at(f, j, 0), y = s.at(f, j, 1), z = s.at(f, j, 2);
            out.at(f, j, 0) = scale * (r[0] * x + r[1] * y + r[2] * z) + t[0];
            out.at(f, j, 1) = scale * (r[3] * x + r[4] * y + r[5] * z) + t[1];
            out.at(f, j, 2) = scale * (r[6] * x + r[7] * y + r[8] * z) + t[2];
        }
    }
    return out;
}

// Independent alignment oracle: Horn's quaternion method. The optimal
// rotation is the eigenvector of the largest eigenvalue of the 4x4 matrix
// built from the cross-covariance; solved here by power iteration with
// deflation-free shifting.
std::vector<double> horn_align(const std::vector<double>& pred, const std::vector<double>& gt,
                               std::int64_t joints, bool with_scale) {
    std::array<double, 3> mp{}, mg{};
    for (std::int64_t j = 0; j < joints; ++j) {
        for (int c = 0; c < 3; ++c) {
            mp[static_cast<std::size_t>(c)] += pred[static_cast<std::size_t>(j * 3 + c)] / joints;
            mg[static_cast<std::size_t>(c)] += gt[static_cast<std::size_t>(j * 3 + c)] / joints;
        }
    }
    std::array<double, 9> m{};  // sum p_i g_iᵀ over centered points
    double var_p = 0.0;
    for (std::int64_t j = 0; j < joints; ++j) {
        std::array<double, 3> p, g;
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(c)] =
                pred[static_cast<std::size_t>(j * 3 + c)] - mp[static_cast<std::size_t>(c)];
            g[static_cast<std::size_t>(c)] =
                gt[static_cast<std::size_t>(j * 3 + c)] - mg[static_cast<std::size_t>(c)];
        }
        var_p += p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                m[static_cast<std::size_t>(r * 3 + c)] +=
                    p[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(c)];
            }
        }
    }
    const double sxx = m[0], sxy = m[1], sxz = m[2];
    const double syx = m[3], syy = m[4], syz = m[5];
    const double szx = m[6], szy = m[7], szz = m[8];
    std::array<double, 16> n{
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz};
    // Direct 4x4 Jacobi eigensolver for the top eigenvector.
    std::array<double, 16> evec{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int r = 0; r < 4; ++r) {
            for (int c = r + 1; c < 4; ++c) off += std::abs(n[static_cast<std::size_t>(r * 4 + c)]);
        }
        if (off < 1e-14) break;
        for (int p = 0; p < 4; ++p) {
            for (int qi = p + 1; qi < 4; ++qi) {
                const double apq = n[static_cast<std::size_t>(p * 4 + qi)];
                if (apq == 0.0) continue;
                const double app = n[static_cast<std::size_t>(p * 4 + p)];
                const double aqq = n[static_cast<std::size_t>(qi * 4 + qi)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 4; ++k) {
                    const double akp = n[static_cast<std::size_t>(k * 4 + p)];
                    const double akq = n[static_cast<std::size_t>(k * 4 + qi)];
                    n[static_cast<std::size_t>(k * 4 + p)] = c * akp - s * akq;
                    n[static_cast<std::size_t>(k * 4 + qi)] = s * akp + c * akq;
                }
                for (int k = 0; k < 4; ++k) {
                    const double apk = n[static_cast<std::size_t>(p * 4 + k)];
                    const double aqk = n[static_cast<std::size_t>(qi * 4 + k)];
                    n[static_cast<std::size_t>(p * 4 + k)] = c * apk - s * aqk;
                    n[static_cast<std::size_t>(qi * 4 + k)] = s * apk + c * aqk;
                }
                for (int k = 0; k < 4; ++k) {
                    const double vkp = evec[static_cast<std::size_t>(k * 4 + p)];
                    const double vkq = evec[static_cast<std::size_t>(k * 4 + qi)];
                    evec[static_cast<std::size_t>(k * 4 + p)] = c * vkp - s * vkq;
                    evec[static_cast<std::size_t>(k * 4 + qi)] = s * vkp + c * vkq;
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i < 4; ++i) {
        if (n[static_cast<std::size_t>(i * 4 + i)] > n[static_cast<std::size_t>(best * 4 + best)]) {
            best = i;
        }
    }
    std::array<double, 4> q{evec[static_cast<std::size_t>(best)],
                            evec[static_cast<std::size_t>(4 + best)],
                            evec[static_cast<std::size_t>(8 + best)],
                            evec[static_cast<std::size_t>(12 + best)]};
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const std::array<double, 9> rot{w * w + x * x - y * y - z * z, 2 * (x * y - w * z),
                                    2 * (x * z + w * y),           2 * (x * y + w * z),
                                    w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
                                    2 * (x * z - w * y),           2 * (y * z + w * x),
                                    w * w - x * x - y * y + z * z};
    // Optimal scale given the rotation.
    double num = 0.0;
    for (std::int64_t j = 0; j < joints; ++j) {
        std::array<double, 3> p{}, g{};
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(c)] =
                pred[static_cast<std::size_t>(j * 3 + c)] - mp[static_cast<std::size_t>(c)];
            g[static_cast<std::size_t>(c)] =
                gt[static_cast<std::size_t>(j * 3 + c)] - mg[static_cast<std::size_t>(c)];
        }
        for (int r = 0; r < 3; ++r) {
            double rp = 0.0;
            for (int c = 0; c < 3; ++c) {
                rp += rot[static_cast<std::size_t>(r * 3 + c)] * p[static_cast<std::size_t>(c)];
            }
            num += rp * g[static_cast<std::size_t>(r)];
        }
    }
    const double scale = with_scale ? num / var_p : 1.0;
    std::vector<double> out(pred.size());
    for (std::int64_t j = 0; j < joints; ++j) {
        std::array<double, 3> p{};
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(c)] =
                pred[static_cast<std::size_t>(j * 3 + c)] - mp[static_cast<std::size_t>(c)];
        }
        for (int r = 0; r < 3; ++r) {
            double rp = 0.0;
            for (int c = 0; c < 3; ++c) {
                rp += rot[static_cast<std::size_t>(r * 3 + c)] * p[static_cast<std::size_t>(c)];
            }
            out[static_cast<std::size_t>(j * 3 + r)] = scale * rp + mg[static_cast<std::size_t>(r)];
        }
    }
    return out;
}

double frame_residual(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("mpjpe: zero, translation cancellation, loop oracle") {
    Rng rng(1);
    auto gt = random_pose(rng, 4, 6, 500.0);
    CHECK(mpjpe(gt, gt, 0) == 0.0);

    auto shifted = gt;
    for (std::int64_t t = 0; t < 4; ++t) {
        for (std::int64_t j = 0; j < 6; ++j) {
            shifted.at(t, j, 0) += 123.0;
            shifted.at(t, j, 1) -= 45.0;
            shifted.at(t, j, 2) += 999.0;
        }
    }
    CHECK(mpjpe(shifted, gt, 0) < 1e-9);

    auto pred = random_pose(rng, 4, 6, 500.0);
    double expect = 0.0;
    for (std::int64_t t = 0; t < 4; ++t) {
        for (std::int64_t j = 0; j < 6; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double dp = pred.at(t, j, c) - pred.at(t, 0, c);
                const double dg = gt.at(t, j, c) - gt.at(t, 0, c);
                d2 += (dp - dg) * (dp - dg);
            }
            expect += std::sqrt(d2);
        }
    }
    expect /= 24.0;
    CHECK(mpjpe(pred, gt, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("procrustes: exact recovery of similarity copies") {
    Rng rng(2);
    auto gt = random_pose(rng, 3, 8, 400.0);
    auto pred = transform(gt, random_rotation(rng), 1.0, {50, -20, 100});
    CHECK(p_mpjpe(pred, gt) < 1e-9);

    auto doubled = transform(gt, {1, 0, 0, 0, 1, 0, 0, 0, 1}, 2.0, {0, 0, 0});
    CHECK(p_mpjpe(doubled, gt) < 1e-9);

    // A similarity with rotation, scale, and translation together.
    auto sim = transform(gt, random_rotation(rng), 0.37, {-300, 80, 12});
    CHECK(p_mpjpe(sim, gt) < 1e-6);

    // Rigid mode must NOT absorb scale.
    CHECK(p_mpjpe(doubled, gt, false) > 1.0);
    CHECK(p_mpjpe(pred, gt, false) < 1e-9);
}

TEST_CASE("procrustes: degenerate target rejected") {
    auto flat = PoseSequence::make(SeqKind::Gt3d, 1, 5);
    for (auto& v : flat.values) v = 7.0;  // all joints coincide
    Rng rng(3);
    auto pred = random_pose(rng, 1, 5, 100.0);
    CHECK_THROWS_AS(p_mpjpe(pred, flat), DegeneracyError);
    CHECK_THROWS_AS(p_mpjpe(flat, pred), DegeneracyError);
}

TEST_CASE("procrustes residual matches the Horn-quaternion oracle") {
    Rng rng(4);
    SUBCASE("generic frames") {
        for (int trial = 0; trial < 25; ++trial) {
            const std::int64_t joints = 5 + trial % 4;
            auto gt = random_pose(rng, 1, joints, 300.0);
            auto pred = random_pose(rng, 1, joints, 300.0);
            auto mine = procrustes_align_frame(pred.values, gt.values, joints, true);
            auto horn = horn_align(pred.values, gt.values, joints, true);
            const double r1 = frame_residual(mine, gt.values);
            const double r2 = frame_residual(horn, gt.values);
            CHECK(std::abs(r1 - r2) < 1e-8 * std::max(1.0, r2));
            CHECK(r1 < r2 + 1e-8);  // never worse than the oracle
        }
    }
    SUBCASE("nearly-collinear frame") {
        const std::int64_t joints = 6;
        auto gt = PoseSequence::make(SeqKind::Gt3d, 1, joints);
        auto pred = PoseSequence::make(SeqKind::Pred3d, 1, joints);
        for (std::int64_t j = 0; j < joints; ++j) {
            const double s = static_cast<double>(j) * 100.0;
            gt.at(0, j, 0) = s;
            gt.at(0, j, 1) = 2.0 * s + rng.uniform(-0.01, 0.01);
            gt.at(0, j, 2) = -s + rng.uniform(-0.01, 0.01);
            pred.at(0, j, 0) = -0.5 * s + rng.uniform(-0.01, 0.01);
            pred.at(0, j, 1) = s;
            pred.at(0, j, 2) = 0.25 * s + rng.uniform(-0.01, 0.01);
        }
        auto mine = procrustes_align_frame(pred.values, gt.values, joints, true);
        auto horn = horn_align(pred.values, gt.values, joints, true);
        const double r1 = frame_residual(mine, gt.values);
        const double r2 = frame_residual(horn, gt.values);
        CHECK(std::abs(r1 - r2) < 1e-8 * std::max(1.0, r2));
    }
}

TEST_CASE("p_mpjpe never exceeds mpjpe on random pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        auto gt = random_pose(rng, 2, 7, 400.0);
        auto pred = random_pose(rng, 2, 7, 400.0);
        CHECK(p_mpjpe(pred, gt) <= mpjpe(pred, gt, 0) + 1e-9);
    }
}

TEST_CASE("pck/auc: trivial values and the threshold-loop oracle") {
    Rng rng(6);
    auto gt = random_pose(rng, 3, 5, 400.0);
    {
        const auto [pck, auc] = pck_auc(gt, gt, 0);
        CHECK(pck == 100.0);
        CHECK(auc == 100.0);
    }
    {
        // Every non-root joint exactly 200mm off: above every threshold.
        auto pred = gt;
        for (std::int64_t t = 0; t < 3; ++t) {
            for (std::int64_t j = 1; j < 5; ++j) pred.at(t, j, 0) += 200.0;
        }
        const auto [pck, auc] = pck_auc(pred, gt, 0);
        // Root joints are always within threshold (error 0): 1/5 of joints.
        CHECK(pck == doctest::Approx(20.0).epsilon(1e-12));
        CHECK(auc == doctest::Approx(20.0).epsilon(1e-12));
    }
    {
        auto pred = random_pose(rng, 3, 5, 400.0);
        const auto [pck, auc] = pck_auc(pred, gt, 0);
        // Brute-force threshold loop.
        std::vector<double> errors;
        for (std::int64_t t = 0; t < 3; ++t) {
            for (std::int64_t j = 0; j < 5; ++j) {
                double d2 = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double dp = pred.at(t, j, c) - pred.at(t, 0, c);
                    const double dg = gt.at(t, j, c) - gt.at(t, 0, c);
                    d2 += (dp - dg) * (dp - dg);
                }
                errors.push_back(std::sqrt(d2));
            }
        }
        double expect_auc = 0.0, expect_pck = 0.0;
        for (int step = 1; step <= 30; ++step) {
            const double tau = 5.0 * step;
            double within = 0;
            for (double e : errors) {
                if (e < tau) within += 1.0;
            }
            const double pct = 100.0 * within / static_cast<double>(errors.size());
            expect_auc += pct / 30.0;
            if (step == 30) expect_pck = pct;
        }
        CHECK(pck == doctest::Approx(expect_pck).epsilon(1e-12));
        CHECK(auc == doctest::Approx(expect_auc).epsilon(1e-12));
    }
}

TEST_CASE("flipping both prediction and ground truth leaves metrics unchanged") {
    auto topo = human36m_topology();
    CameraModel cam;
    Rng rng(7);
    auto gt = synth_sequence(77, topo, 5, cam, 0.0).gt3d;
    auto pred = gt;
    for (auto& v : pred.values) v += rng.uniform(-30.0, 30.0);

    auto fp = flip_horizontal(pred, topo);
    auto fg = flip_horizontal(gt, topo);
    CHECK(std::abs(mpjpe(fp, fg, topo.root_index) - mpjpe(pred, gt, topo.root_index)) < 1e-9);
    CHECK(std::abs(p_mpjpe(fp, fg) - p_mpjpe(pred, gt)) < 1e-9);
    const auto [pck1, auc1] = pck_auc(pred, gt, topo.root_index);
    const auto [pck2, auc2] = pck_auc(fp, fg, topo.root_index);
    CHECK(std::abs(pck1 - pck2) < 1e-9);
    CHECK(std::abs(auc1 - auc2) < 1e-9);
}

TEST_CASE("evaluate_metrics aggregates and keeps the report invariants") {
    Rng rng(8);
    std::vector<PoseSequence> preds, gts;
    for (int i = 0; i < 3; ++i) {
        gts.push_back(random_pose(rng, 4, 6, 400.0));
        auto p = gts.back();
        for (auto& v : p.values) v += rng.uniform(-50.0, 50.0);
        preds.push_back(std::move(p));
    }
    auto report = evaluate_metrics(preds, gts, 0);
    CHECK(report.per_sequence_mpjpe.size() == 3);
    CHECK(report.pck150_pct >= 0.0);
    CHECK(report.pck150_pct <= 100.0);
    CHECK(report.auc_pct >= 0.0);
    CHECK(report.auc_pct <= 100.0);
    CHECK(report.mpjpe_mm >= report.p_mpjpe_mm - 1e-9);
}
