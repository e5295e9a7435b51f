#include "mixtg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mixtg/errors.hpp"

namespace mixtg {

namespace {

using Mat3 = std::array<double, 9>;
using Vec3 = std::array<double, 3>;

// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
void jacobi3(Mat3 a, Mat3& v, Vec3& lambda) {
    v = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int sweep = 0; sweep < 64; ++sweep) {
        const double off = std::abs(a[1]) + std::abs(a[2]) + std::abs(a[5]);
        const double diag = std::abs(a[0]) + std::abs(a[4]) + std::abs(a[8]);
        if (off <= 1e-300 || off <= 1e-16 * diag) break;
        for (const auto& [p, q] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
            const double apq = a[static_cast<std::size_t>(p * 3 + q)];
            if (apq == 0.0) continue;
            const double app = a[static_cast<std::size_t>(p * 3 + p)];
            const double aqq = a[static_cast<std::size_t>(q * 3 + q)];
            const double theta = (aqq - app) / (2.0 * apq);
            const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                             (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            const double c = 1.0 / std::sqrt(t * t + 1.0);
            const double s = t * c;
            // A <- Jᵀ A J on rows/columns p and q.
            for (int k = 0; k < 3; ++k) {
                const double akp = a[static_cast<std::size_t>(k * 3 + p)];
                const double akq = a[static_cast<std::size_t>(k * 3 + q)];
                a[static_cast<std::size_t>(k * 3 + p)] = c * akp - s * akq;
                a[static_cast<std::size_t>(k * 3 + q)] = s * akp + c * akq;
            }
            for (int k = 0; k < 3; ++k) {
                const double apk = a[static_cast<std::size_t>(p * 3 + k)];
                const double aqk = a[static_cast<std::size_t>(q * 3 + k)];
                a[static_cast<std::size_t>(p * 3 + k)] = c * apk - s * aqk;
                a[static_cast<std::size_t>(q * 3 + k)] = s * apk + c * aqk;
            }
            for (int k = 0; k < 3; ++k) {
                const double vkp = v[static_cast<std::size_t>(k * 3 + p)];
                const double vkq = v[static_cast<std::size_t>(k * 3 + q)];
                v[static_cast<std::size_t>(k * 3 + p)] = c * vkp - s * vkq;
                v[static_cast<std::size_t>(k * 3 + q)] = s * vkp + c * vkq;
            }
        }
    }
    lambda = {a[0], a[4], a[8]};
}

Vec3 matvec(const Mat3& m, const Vec3& x) {
    return {m[0] * x[0] + m[1] * x[1] + m[2] * x[2], m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
            m[6] * x[0] + m[7] * x[1] + m[8] * x[2]};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double det3(const Mat3& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

// SVD of a 3x3 matrix via the eigendecomposition of AᵀA; rank-deficient
// columns of U are completed orthonormally.
void svd3(const Mat3& a, Mat3& u, Vec3& sigma, Mat3& v) {
    Mat3 ata{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) {
                acc += a[static_cast<std::size_t>(k * 3 + i)] *
                       a[static_cast<std::size_t>(k * 3 + j)];
            }
            ata[static_cast<std::size_t>(i * 3 + j)] = acc;
        }
    }
    Mat3 vraw;
    Vec3 lraw;
    jacobi3(ata, vraw, lraw);
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int x, int y) { return lraw[static_cast<std::size_t>(x)] > lraw[static_cast<std::size_t>(y)]; });
    std::array<Vec3, 3> vcols;
    for (int i = 0; i < 3; ++i) {
        const int src = order[static_cast<std::size_t>(i)];
        sigma[static_cast<std::size_t>(i)] =
            std::sqrt(std::max(0.0, lraw[static_cast<std::size_t>(src)]));
        vcols[static_cast<std::size_t>(i)] = {0, 0, 0};
        for (int r = 0; r < 3; ++r) {
            vcols[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] =
                vraw[static_cast<std::size_t>(r * 3 + src)];
        }
    }
    const double scale = std::max({sigma[0], 1e-300});
    std::array<Vec3, 3> ucols;
    int built = 0;
    for (int i = 0; i < 3 && built == i; ++i) {
        Vec3 cand = matvec(a, vcols[static_cast<std::size_t>(i)]);
        for (int j = 0; j < built; ++j) {
            const double proj = dot(cand, ucols[static_cast<std::size_t>(j)]);
            for (int k = 0; k < 3; ++k) {
                cand[static_cast<std::size_t>(k)] -=
                    proj * ucols[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            }
        }
        const double n = norm(cand);
        if (sigma[static_cast<std::size_t>(i)] > 1e-12 * scale && n > 1e-14 * scale) {
            for (auto& x : cand) x /= n;
            ucols[static_cast<std::size_t>(built++)] = cand;
        }
    }
    // Complete to an orthonormal basis.
    if (built == 0) {
        ucols[0] = {1, 0, 0};
        built = 1;
    }
    if (built == 1) {
        const Vec3 probe = std::abs(ucols[0][0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 second = cross(ucols[0], probe);
        const double n = norm(second);
        for (auto& x : second) x /= n;
        ucols[1] = second;
        built = 2;
    }
    if (built == 2) {
        ucols[2] = cross(ucols[0], ucols[1]);
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            u[static_cast<std::size_t>(r * 3 + c)] = ucols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
            v[static_cast<std::size_t>(r * 3 + c)] = vcols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
        }
    }
}

void check_pose_pair(const PoseSequence& pred, const PoseSequence& gt) {
    if (pred.frames != gt.frames || pred.joints != gt.joints) {
        throw DimensionError("metrics: prediction and ground truth shapes must match");
    }
}

double frame_mean_distance(const std::vector<double>& a, const std::vector<double>& b,
                           std::int64_t joints) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < joints; ++j) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = a[static_cast<std::size_t>(j * 3 + c)] -
                             b[static_cast<std::size_t>(j * 3 + c)];
            d2 += d * d;
        }
        acc += std::sqrt(d2);
    }
    return acc / static_cast<double>(joints);
}

std::vector<double> frame_of(const PoseSequence& s, std::int64_t t) {
    return {s.values.begin() + t * s.joints * 3, s.values.begin() + (t + 1) * s.joints * 3};
}

// Per-joint errors after root alignment, pooled over frames.
std::vector<double> root_aligned_errors(const PoseSequence& pred, const PoseSequence& gt,
                                        std::int64_t root) {
    std::vector<double> errors;
    errors.reserve(static_cast<std::size_t>(pred.frames * pred.joints));
    for (std::int64_t t = 0; t < pred.frames; ++t) {
        for (std::int64_t j = 0; j < pred.joints; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double dp = pred.at(t, j, c) - pred.at(t, root, c);
                const double dg = gt.at(t, j, c) - gt.at(t, root, c);
                const double d = dp - dg;
                d2 += d * d;
            }
            errors.push_back(std::sqrt(d2));
        }
    }
    return errors;
}

}  // namespace

double mpjpe(const PoseSequence& pred, const PoseSequence& gt, std::int64_t root_index) {
    check_pose_pair(pred, gt);
    if (root_index < 0 || root_index >= pred.joints) {
        throw DimensionError("mpjpe: root index out of range");
    }
    const auto errors = root_aligned_errors(pred, gt, root_index);
    double acc = 0.0;
    for (double e : errors) acc += e;
    return acc / static_cast<double>(errors.size());
}

std::vector<double> procrustes_align_frame(const std::vector<double>& pred,
                                           const std::vector<double>& gt, std::int64_t joints,
                                           bool with_scale) {
    if (joints < 3) throw DimensionError("procrustes: need at least 3 joints");
    if (static_cast<std::int64_t>(pred.size()) != joints * 3 ||
        static_cast<std::int64_t>(gt.size()) != joints * 3) {
        throw DimensionError("procrustes: frames must be J x 3");
    }
    Vec3 mu_p{0, 0, 0};
    Vec3 mu_g{0, 0, 0};
    for (std::int64_t j = 0; j < joints; ++j) {
        for (int c = 0; c < 3; ++c) {
            mu_p[static_cast<std::size_t>(c)] += pred[static_cast<std::size_t>(j * 3 + c)];
            mu_g[static_cast<std::size_t>(c)] += gt[static_cast<std::size_t>(j * 3 + c)];
        }
    }
    for (int c = 0; c < 3; ++c) {
        mu_p[static_cast<std::size_t>(c)] /= static_cast<double>(joints);
        mu_g[static_cast<std::size_t>(c)] /= static_cast<double>(joints);
    }
    double var_p = 0.0, var_g = 0.0;
    Mat3 cov{};
    for (std::int64_t j = 0; j < joints; ++j) {
        Vec3 p, g;
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(c)] =
                pred[static_cast<std::size_t>(j * 3 + c)] - mu_p[static_cast<std::size_t>(c)];
            g[static_cast<std::size_t>(c)] =
                gt[static_cast<std::size_t>(j * 3 + c)] - mu_g[static_cast<std::size_t>(c)];
        }
        var_p += dot(p, p);
        var_g += dot(g, g);
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                cov[static_cast<std::size_t>(r * 3 + c)] +=
                    g[static_cast<std::size_t>(r)] * p[static_cast<std::size_t>(c)];
            }
        }
    }
    var_p /= static_cast<double>(joints);
    var_g /= static_cast<double>(joints);
    for (auto& x : cov) x /= static_cast<double>(joints);
    if (var_g == 0.0) throw DegeneracyError("procrustes: ground-truth frame is degenerate");
    if (var_p == 0.0) throw DegeneracyError("procrustes: prediction frame is degenerate");

    Mat3 u, v;
    Vec3 sigma;
    svd3(cov, u, sigma, v);
    const double sign = det3(u) * det3(v) < 0.0 ? -1.0 : 1.0;
    Mat3 rot{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double s_k = k == 2 ? sign : 1.0;
                acc += u[static_cast<std::size_t>(r * 3 + k)] * s_k *
                       v[static_cast<std::size_t>(c * 3 + k)];
            }
            rot[static_cast<std::size_t>(r * 3 + c)] = acc;
        }
    }
    const double trace_ds = sigma[0] + sigma[1] + sign * sigma[2];
    const double scale = with_scale ? trace_ds / var_p : 1.0;

    std::vector<double> aligned(pred.size());
    for (std::int64_t j = 0; j < joints; ++j) {
        Vec3 p;
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(c)] =
                pred[static_cast<std::size_t>(j * 3 + c)] - mu_p[static_cast<std::size_t>(c)];
        }
        const Vec3 rp = matvec(rot, p);
        for (int c = 0; c < 3; ++c) {
            aligned[static_cast<std::size_t>(j * 3 + c)] =
                scale * rp[static_cast<std::size_t>(c)] + mu_g[static_cast<std::size_t>(c)];
        }
    }
    return aligned;
}

double p_mpjpe(const PoseSequence& pred, const PoseSequence& gt, bool with_scale) {
    check_pose_pair(pred, gt);
    double acc = 0.0;
    for (std::int64_t t = 0; t < pred.frames; ++t) {
        const auto pf = frame_of(pred, t);
        const auto gf = frame_of(gt, t);
        const auto aligned = procrustes_align_frame(pf, gf, pred.joints, with_scale);
        acc += frame_mean_distance(aligned, gf, pred.joints);
    }
    return acc / static_cast<double>(pred.frames);
}

std::pair<double, double> pck_auc(const PoseSequence& pred, const PoseSequence& gt,
                                  std::int64_t root_index) {
    check_pose_pair(pred, gt);
    const auto errors = root_aligned_errors(pred, gt, root_index);
    const auto total = static_cast<double>(errors.size());
    double pck150 = 0.0;
    double auc = 0.0;
    for (int step = 1; step <= 30; ++step) {
        const double tau = 5.0 * step;
        std::int64_t within = 0;
        for (double e : errors) {
            if (e < tau) ++within;
        }
        const double pct = 100.0 * static_cast<double>(within) / total;
        auc += pct;
        if (step == 30) pck150 = pct;  // tau = 150mm
    }
    return {pck150, auc / 30.0};
}

MetricsReport evaluate_metrics(const std::vector<PoseSequence>& preds,
                               const std::vector<PoseSequence>& gts, std::int64_t root_index,
                               bool p2_with_scale) {
    if (preds.size() != gts.size() || preds.empty()) {
        throw DimensionError("evaluate_metrics: need matching non-empty sequence lists");
    }
    MetricsReport report;
    double weight_sum = 0.0;
    double mpjpe_acc = 0.0, p_mpjpe_acc = 0.0, pck_acc = 0.0, auc_acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& p = preds[i];
        const auto& g = gts[i];
        const double w = static_cast<double>(p.frames * p.joints);
        const double m1 = mpjpe(p, g, root_index);
        const double m2 = p_mpjpe(p, g, p2_with_scale);
        const auto [pck, auc] = pck_auc(p, g, root_index);
        report.per_sequence_mpjpe.push_back(m1);
        report.per_sequence_p_mpjpe.push_back(m2);
        mpjpe_acc += w * m1;
        p_mpjpe_acc += w * m2;
        pck_acc += w * pck;
        auc_acc += w * auc;
        weight_sum += w;
    }
    report.mpjpe_mm = mpjpe_acc / weight_sum;
    report.p_mpjpe_mm = p_mpjpe_acc / weight_sum;
    report.pck150_pct = pck_acc / weight_sum;
    report.auc_pct = auc_acc / weight_sum;
    return report;
}

}  // namespace mixtg
