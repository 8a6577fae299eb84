// Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each with its
// pinned tolerance and measured runtime. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hmr/decimate.hpp"
#include "hmr/gradcheck_suite.hpp"
#include "hmr/graphconv.hpp"
#include "hmr/lifting.hpp"
#include "hmr/losses.hpp"
#include "hmr/mesh.hpp"
#include "hmr/metrics.hpp"
#include "hmr/synthdata.hpp"
#include "hmr/train.hpp"

using namespace hmr;

namespace {

int g_failures = 0;

void criterion(int id, const std::string& label, double budget_s,
               const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        auto [passed, d] = body();
        ok = passed;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget_s) {
        ok = false;
        detail += " [exceeded " + std::to_string(budget_s) + "s budget]";
    }
    std::printf("criterion %2d: %s  %s (%s; %.1fs of %.0fs budget)\n", id, ok ? "PASS" : "FAIL",
                label.c_str(), detail.c_str(), secs, budget_s);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---- criterion 1: factored equivalence -------------------------------------
std::pair<bool, std::string> check_equivalence() {
    auto mesh = make_grid(7, 7);  // 49 vertices
    auto table = build_spiral_table(mesh, 9);
    double worst = 0;
    for (unsigned seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(seed);
        auto layer = DSConvLayer::init(9, 32, 32, true, rng);
        Tensor f = uniform_tensor<float>({49, 32}, rng);
        auto ds = dsconv_forward(ad::constant(f), table, layer);
        auto pp = spiralpp_forward(ad::constant(f), table, factored_equivalent(layer));
        worst = std::max(worst, max_abs_diff(ds->value, pp->value));
    }
    return {worst <= 1e-5, "max |dsconv - factored spiralpp| = " + fmt(worst) + " <= 1e-5, 10 seeds"};
}

// ---- criterion 2: cost-model identities ------------------------------------
std::pair<bool, std::string> check_cost_model() {
    int pairs = 0;
    for (int s : {3, 5, 9, 13, 21})
        for (int d : {16, 32, 64, 128}) {
            const auto pp = count_spiralpp("pp", 778, s, d, d);
            const auto ds = count_dsconv("ds", 778, s, d, d, false);
            // exact rational identity ds/pp = 1/d + 1/s  <=>  ds*s*d == pp*(s+d)
            if (ds.mult_adds * s * d != pp.mult_adds * (s + d))
                return {false, "ratio identity failed at S=" + std::to_string(s) +
                                   " D=" + std::to_string(d)};
            ++pairs;
        }
    const long long fc = fc_lifting_params(256, 49);
    const long long pv = pvl_params(49, 21);
    if (fc != 3211264) return {false, "FC-lifting params = " + std::to_string(fc) + " != 3211264"};
    if (pv != 1029) return {false, "PVL params = " + std::to_string(pv) + " != 1029"};
    return {true, std::to_string(pairs) + "/20 exact ratio identities; FC-lifting 3211264; PVL 1029"};
}

// ---- criterion 3: gradient verification ------------------------------------
std::pair<bool, std::string> check_gradients() {
    auto f32 = gradsuite::run_suite(false, 0, false, 1e-4, 1e-3);
    auto f64 = gradsuite::run_suite(true, 0, false, 1e-4, 1e-6);
    double w32 = 0, w64 = 0;
    for (const auto& c : f32.checks) w32 = std::max(w32, c.max_rel_error);
    for (const auto& c : f64.checks) w64 = std::max(w64, c.max_rel_error);
    const bool ok = f32.all_passed && f64.all_passed && f32.op_count >= 12;
    return {ok, std::to_string(f32.op_count) + " ops x 3 seeds; worst rel err f32 " + fmt(w32) +
                    " <= 1e-3, f64 " + fmt(w64) + " <= 1e-6"};
}

// ---- criterion 4: spiral correctness ---------------------------------------
std::vector<std::set<int>> bfs_rings(const TriMesh& mesh, int v, int max_ring) {
    std::vector<std::set<int>> rings{{v}};
    std::set<int> seen{v};
    for (int r = 0; r < max_ring; ++r) {
        std::set<int> next;
        for (int u : rings.back())
            for (int w : one_ring(mesh, u))
                if (!seen.count(w)) next.insert(w);
        for (int w : next) seen.insert(w);
        if (next.empty()) break;
        rings.push_back(std::move(next));
    }
    return rings;
}

std::pair<bool, std::string> check_spirals() {
    int rows = 0;
    for (const TriMesh& mesh : {make_icosphere(2), make_grid(10, 10), make_grid(14, 14)}) {
        if (mesh.vertex_count() > 200) return {false, "fixture mesh exceeds 200 vertices"};
        for (int s : {1, 5, 9}) {
            auto table = build_spiral_table(mesh, s);
            for (int v = 0; v < mesh.vertex_count(); ++v, ++rows) {
                if (table.entries.at({v, 0}) != v)
                    return {false, "entries[v][0] != v at v=" + std::to_string(v)};
                auto rings = bfs_rings(mesh, v, s);
                // the spiral must list ring 0, then ring 1, ... consuming each
                // ring completely before the next one starts (ring-disjoint,
                // BFS-disk set equality at every ring boundary)
                std::size_t ring_idx = 0;
                std::set<int> remaining = rings[0];
                for (int j = 0; j < s; ++j) {
                    const int e = table.entries.at({v, j});
                    if (table.padded && e < 0) continue;
                    if (!remaining.count(e)) {
                        if (!remaining.empty() || ring_idx + 1 >= rings.size())
                            return {false, "ring ordering violated at v=" + std::to_string(v)};
                        remaining = rings[++ring_idx];
                        if (!remaining.count(e))
                            return {false, "entry outside its BFS ring at v=" + std::to_string(v)};
                    }
                    remaining.erase(e);
                }
            }
        }
    }
    return {true, std::to_string(rows) + " spiral rows: entries[v][0]=v, rings consumed in "
                  "BFS order on icosphere + grids"};
}

// ---- criterion 5: decimation chain -----------------------------------------
std::pair<bool, std::string> check_decimation() {
    auto hand = toy_hand_dense(HandPose{});
    if (hand.mesh.vertex_count() != 778)
        return {false, "dense template has " + std::to_string(hand.mesh.vertex_count()) +
                           " vertices, expected 778"};
    auto chain = decimate_chain(hand.mesh, 4);
    const std::vector<int> expect{778, 389, 195, 98, 49};
    for (int i = 0; i < 5; ++i)
        if (chain.meshes[static_cast<std::size_t>(i)].vertex_count() != expect[static_cast<std::size_t>(i)])
            return {false, "level " + std::to_string(i) + " has " +
                               std::to_string(chain.meshes[static_cast<std::size_t>(i)].vertex_count()) +
                               " vertices"};
    // up-matrix rows sum to 1
    double worst_row = 0;
    for (const auto& t : chain.transforms) {
        std::vector<double> sums(static_cast<std::size_t>(t.up.rows), 0.0);
        for (std::size_t k = 0; k < t.up.nnz(); ++k) sums[static_cast<std::size_t>(t.up.r[k])] += t.up.w[k];
        for (double s : sums) worst_row = std::max(worst_row, std::abs(s - 1.0));
    }
    if (worst_row > 1e-6) return {false, "up-matrix row sum off by " + fmt(worst_row)};
    // linear reproduction on a flat grid
    auto grid = make_grid(28, 28);  // 784 vertices, comparable scale
    auto gchain = decimate_chain(grid, 4);
    double rms = 0;
    {
        const auto& coarse = gchain.meshes[1];
        const auto& up = gchain.transforms[0].up;
        // f(x,y,z) = 2x - 3y + 0.5z + 1 sampled on the coarse mesh, upsampled,
        // compared against direct evaluation on the fine mesh
        auto lin = [](const Vec3& p) { return 2.0 * p[0] - 3.0 * p[1] + 0.5 * p[2] + 1.0; };
        Tensor cf({coarse.vertex_count(), 1});
        for (int v = 0; v < coarse.vertex_count(); ++v)
            cf.at({v, 0}) = static_cast<float>(lin(coarse.vertices[static_cast<std::size_t>(v)]));
        auto fine = ad::sparse_apply(up, ad::constant(cf));
        double acc = 0;
        for (int v = 0; v < grid.vertex_count(); ++v) {
            const double d = fine->value.at({v, 0}) - lin(grid.vertices[static_cast<std::size_t>(v)]);
            acc += d * d;
        }
        rms = std::sqrt(acc / grid.vertex_count());
    }
    if (rms > 1e-3) return {false, "linear reproduction RMS " + fmt(rms) + " > 1e-3"};
    return {true, "778->389->195->98->49; row sums within " + fmt(worst_row) +
                      "; linear-reproduction RMS " + fmt(rms) + " <= 1e-3"};
}

// ---- criterion 6: dataset combinatorics ------------------------------------
std::pair<bool, std::string> check_dataset() {
    auto cams = camera_grid(30.0);
    if (cams.size() != 216) return {false, std::to_string(cams.size()) + " cameras != 216"};
    auto bases = base_poses();
    auto pairs = pose_pairs();
    auto all = full_pose_set();
    if (bases.size() != 32 || pairs.size() != 496 || all.size() != 1520)
        return {false, "pose counts " + std::to_string(bases.size()) + "/" +
                           std::to_string(pairs.size()) + "/" + std::to_string(all.size()) +
                           " != 32/496/1520"};
    double worst = 0;
    int n = 0;
    for (std::size_t p = 0; p < all.size(); p += 97)
        for (std::size_t c = 0; c < cams.size(); c += 27, ++n) {
            auto s = make_sample(all[p], cams[c], static_cast<int>(c));
            auto again = project(s.joints3d, cams[c]);
            worst = std::max(worst, max_abs_diff(s.landmarks, again));
        }
    if (worst >= 1e-6) return {false, "reprojection residual " + fmt(worst) + " >= 1e-6"};
    return {true, "216 cameras; 32/496/1520 poses; reprojection residual " + fmt(worst) +
                      " < 1e-6 on " + std::to_string(n) + " samples"};
}

// ---- criterion 7: metric properties ----------------------------------------
std::pair<bool, std::string> check_metrics() {
    std::mt19937 rng(3);
    TensorD g = uniform_tensor<double>({21, 3}, rng);
    // similarity transform: rotate about z by 0.7, scale 1.8, translate
    TensorD p(g.shape);
    const double c = std::cos(0.7), s = std::sin(0.7), sc = 1.8;
    for (int i = 0; i < 21; ++i) {
        const double x = g.at({i, 0}), y = g.at({i, 1}), z = g.at({i, 2});
        p.at({i, 0}) = sc * (c * x - s * y) + 0.4;
        p.at({i, 1}) = sc * (s * x + c * y) - 0.2;
        p.at({i, 2}) = sc * z + 1.1;
    }
    const double pa = pa_mpjpe(p, g);
    const double plain = mpjpe(p, g);
    if (!(pa <= 1e-5)) return {false, "PA-MPJPE " + fmt(pa) + " > 1e-5 under similarity"};
    if (!(plain > 1e-3)) return {false, "plain MPJPE " + fmt(plain) + " not > 0"};
    // constant-velocity track has zero acceleration error
    SequenceTrack track;
    for (int t = 0; t < 6; ++t) {
        TensorD f(g.shape);
        for (std::int64_t i = 0; i < g.numel(); ++i) f[i] = g[i] + 0.3 * t;
        track.frames.push_back(f);
    }
    const double a = acc(track);
    if (!(std::abs(a) <= 1e-9)) return {false, "Acc " + fmt(a) + " != 0 on constant velocity"};
    // AUC / F-score trivial cases
    const double auc1 = auc_pck(std::vector<double>(10, 0.0), 0.0, 50.0, 100);
    const double auc0 = auc_pck(std::vector<double>(10, 1e9), 0.0, 50.0, 100);
    if (!(auc1 >= 0.99)) return {false, "AUC of perfect errors = " + fmt(auc1)};
    if (!(auc0 <= 0.01)) return {false, "AUC of hopeless errors = " + fmt(auc0)};
    const double f1 = f_score(g, g, 1e-3);
    if (f1 != 1.0) return {false, "F-score of identical sets = " + fmt(f1)};
    return {true, "PA " + fmt(pa) + " <= 1e-5 vs MPJPE " + fmt(plain) +
                      " > 0; Acc 0; AUC 1/0 extremes; F-score 1"};
}

// ---- criterion 8: soft-argmax round trip -----------------------------------
std::pair<bool, std::string> check_round_trip() {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> d(0.15, 0.85);
    double worst = 0;
    for (int rep = 0; rep < 5; ++rep) {
        TensorD lm({21, 2});
        for (std::int64_t i = 0; i < lm.numel(); ++i) lm[i] = d(rng);
        auto maps = render_heatmaps(lm, 32, 2.0);
        auto rec = soft_argmax(ad::constant(maps), 0.05);
        for (int j = 0; j < 21; ++j)
            for (int c = 0; c < 2; ++c)
                worst = std::max(worst, std::abs(rec->value.at({j, c}) - lm.at({j, c})));
    }
    const double pitch = 1.0 / 31.0;
    return {worst <= pitch, "worst round-trip error " + fmt(worst) + " <= pixel pitch " +
                                fmt(pitch) + " (32x32, sigma 2)"};
}

// ---- criterion 9: toy end-to-end training ----------------------------------
std::pair<bool, std::string> check_training() {
    TrainConfig cfg;  // acceptance contract: default config, seed 0, 2000 samples
    cfg.seed = 0;
    cfg.out_dir = "acceptance_train";
    auto rep = train_toy(cfg);
    if (rep.aborted) return {false, "training aborted: " + rep.abort_reason};
    const double loss_ratio = rep.final_loss / rep.initial_loss;
    const double pa_ratio = rep.final_pa / rep.untrained_pa;
    const bool ok = loss_ratio <= 0.10 && pa_ratio <= 0.25;
    return {ok, "loss " + fmt(rep.initial_loss) + " -> " + fmt(rep.final_loss) + " (ratio " +
                    fmt(loss_ratio) + " <= 0.10); held-out PA " + fmt(rep.untrained_pa) +
                    " -> " + fmt(rep.final_pa) + " (ratio " + fmt(pa_ratio) + " <= 0.25); " +
                    std::to_string(rep.steps) + " steps on " + std::to_string(cfg.train_samples) +
                    " samples"};
}

// ---- criterion 10: benchmark direction -------------------------------------
std::pair<bool, std::string> check_bench_direction() {
    auto hand = toy_hand_dense(HandPose{});
    auto table = build_spiral_table(hand.mesh, 9);
    std::mt19937 rng(0);
    auto sp = SpiralPPLayer::init(9, 256, 256, rng);
    auto ds = DSConvLayer::init(9, 256, 256, true, rng);
    Tensor f = uniform_tensor<float>({778, 256}, rng);
    auto time_of = [&](const std::function<void()>& fn) {
        fn();  // warm-up
        const auto t0 = std::chrono::steady_clock::now();
        int reps = 0;
        double el = 0;
        while (el < 0.5) {
            fn();
            ++reps;
            el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        return el / reps;
    };
    const double tsp = time_of([&] { spiralpp_forward(ad::constant(f), table, sp); });
    const double tds = time_of([&] { dsconv_forward(ad::constant(f), table, ds); });
    return {tds < tsp, "dsconv " + fmt(tds * 1e3) + "ms < spiralpp " + fmt(tsp * 1e3) +
                           "ms at V=778, S=9, D=256 (speedup " + fmt(tsp / tds) +
                           "x; modeled ratio 0.11501)"};
}

}  // namespace

int main() {
    criterion(1, "DSConv-SpiralConv++ factored equivalence", 5, check_equivalence);
    criterion(2, "cost-model identities", 1, check_cost_model);
    criterion(3, "gradient verification over the op census", 120, check_gradients);
    criterion(4, "spiral table correctness", 10, check_spirals);
    criterion(5, "decimation chain 778->49", 30, check_decimation);
    criterion(6, "dataset combinatorics + reprojection", 10, check_dataset);
    criterion(7, "metric properties", 10, check_metrics);
    criterion(8, "soft-argmax/heatmap round trip", 5, check_round_trip);
    criterion(9, "toy end-to-end training", 1800, check_training);
    criterion(10, "benchmark direction dsconv < spiralpp", 60, check_bench_direction);
    if (g_failures > 0) {
        std::printf("ACCEPTANCE: %d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("ACCEPTANCE: all 10 criteria passed\n");
    return 0;
}
