// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Usage: acceptance <work_dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "sodkit/cli.hpp"
#include "sodkit/errors.hpp"
#include "sodkit/training.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace sodkit;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

// Accumulates failed checks with a short reason each.
struct Checks {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    Verdict verdict(std::string summary) const {
        if (failures.empty()) return {true, std::move(summary)};
        std::string d = failures.front();
        if (failures.size() > 1) d += " (+" + std::to_string(failures.size() - 1) + " more)";
        return {false, d};
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

ModelConfig tiny(int size, std::uint64_t seed = 1) {
    ModelConfig m;
    m.encoder.input_height = m.encoder.input_width = size;
    m.seed = seed;
    return m;
}

int cli_run(std::vector<std::string> args, std::string* out = nullptr) {
    args.insert(args.begin(), "sodkit");
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str() + e.str();
    return code;
}

// 1. Zero-bias impulse footprints of the dilated branches.
Verdict receptive_fields() {
    Checks c;
    Rng rng(3);
    ParameterRegistry reg;
    LayerContext ctx{reg, rng, ParamGroup::kBranch};
    const MultiReceptiveBlock low(ctx, "low", 8, 16, {1, 2, 3}, true);
    const MultiReceptiveBlock high(ctx, "high", 8, 16, {1, 3, 5}, true);
    std::string seen;
    for (const auto& [block, index, rate] :
         std::vector<std::tuple<const MultiReceptiveBlock*, int, int>>{{&low, 0, 1}, {&low, 1, 2}, {&low, 2, 3}, {&high, 2, 5}}) {
        Tensor impulse({1, 16, 31, 31});
        impulse.at(0, 5, 15, 15) = 1.0f;
        NoGradGuard g;
        const Tensor out = block->branch(index, Var(impulse)).value();
        int y0 = 99, y1 = -1, x0 = 99, x1 = -1;
        for (int ch = 0; ch < out.shape().c; ++ch)
            for (int y = 0; y < 31; ++y)
                for (int x = 0; x < 31; ++x)
                    if (out.at(0, ch, y, x) != 0.0f) {
                        y0 = std::min(y0, y), y1 = std::max(y1, y), x0 = std::min(x0, x), x1 = std::max(x1, x);
                    }
        const int h = y1 - y0 + 1, w = x1 - x0 + 1;
        c.expect(h == 2 * rate + 1 && w == 2 * rate + 1,
                 "rate " + std::to_string(rate) + " footprint " + std::to_string(h) + "x" + std::to_string(w));
        c.expect(y0 == 15 - rate && x0 == 15 - rate, "rate " + std::to_string(rate) + " footprint off-centre");
        seen += (seen.empty() ? "" : ", ") + std::to_string(h) + "x" + std::to_string(w);
    }
    return c.verdict("footprints " + seen + " for rates 1, 2, 3, 5");
}

// 2. Central-difference check of the two-prediction objective.
Verdict loss_gradient() {
    Checks c;
    Rng rng(5);
    const double h = 1e-6;
    double worst = 0;
    const int trials = 25;
    for (int t = 0; t < trials; ++t) {
        const Mask gm = testing::random_mask(6, 6, rng, rng.uniform(0.2, 0.8));
        const std::vector<double> g(gm.values.begin(), gm.values.end());
        const Plane<float> ap = loss::alpha_weights(loss::edge_map(gm));
        const std::vector<double> a(ap.values.begin(), ap.values.end());
        std::vector<double> z1(36), z2(36);
        for (int i = 0; i < 36; ++i) z1[i] = rng.normal(0, 2), z2[i] = rng.normal(0, 2);
        std::vector<double> d1, d2;
        loss::supervised_loss<double>(z1, z2, g, a, 1, {}, &d1, &d2);
        double num = 0, den = 0;
        for (int which = 0; which < 2; ++which)
            for (int i = 0; i < 36; ++i) {
                auto p1 = z1, m1 = z1, p2 = z2, m2 = z2;
                (which ? p2 : p1)[i] += h;
                (which ? m2 : m1)[i] -= h;
                const double fd = (loss::supervised_loss<double>(p1, p2, g, a, 1, {}).total -
                                   loss::supervised_loss<double>(m1, m2, g, a, 1, {}).total) /
                                  (2 * h);
                const double an = (which ? d2 : d1)[i];
                num += (fd - an) * (fd - an);
                den += fd * fd;
            }
        worst = std::max(worst, std::sqrt(num / den));
    }
    c.expect(worst < 1e-4, "relative error " + fmt("%.3g", worst));
    return c.verdict(std::to_string(trials) + " trials, worst relative error " + fmt("%.2e", worst));
}

// 3. Loss spot values.
Verdict loss_spots() {
    Checks c;
    const double b = loss::wbce<double>(std::vector<double>{0.5}, std::vector<double>{1}, std::vector<double>{1.5});
    const double u = loss::wiou<double>(std::vector<double>{0.5, 0.5, 0, 0}, std::vector<double>{1, 0, 0, 0},
                                        std::vector<double>(4, 1.5));
    c.expect(std::fabs(b - 1.1552453) <= 1e-6, "wbce " + fmt("%.9f", b));
    c.expect(std::fabs(u - 0.6666667) <= 1e-6, "wiou " + fmt("%.9f", u));
    Rng rng(2);
    int exact = 0;
    for (int t = 0; t < 50; ++t) {
        const Mask m = testing::random_mask(rng.uniform_int(2, 12), rng.uniform_int(2, 12), rng, rng.uniform());
        const std::vector<double> g(m.values.begin(), m.values.end());
        const Plane<float> ap = loss::alpha_weights(loss::edge_map(m));
        exact += loss::wiou<double>(g, g, std::vector<double>(ap.values.begin(), ap.values.end())) == 0.0;
    }
    c.expect(exact == 50, "wiou(g,g) exact zero on " + std::to_string(exact) + "/50");
    return c.verdict("wbce " + fmt("%.7f", b) + ", wiou " + fmt("%.7f", u) + ", wiou(g,g)=0 on 50/50");
}

// 4. Metrics against brute-force oracles.
Verdict metric_oracles() {
    Checks c;
    Rng rng(1);
    std::vector<metrics::SaliencyMap> preds;
    std::vector<Mask> gts;
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        preds.push_back(testing::random_map(8, 8, rng));
        gts.push_back(testing::random_mask(8, 8, rng, rng.uniform()));
        const auto& p = preds.back();
        const auto& g = gts.back();
        worst = std::max(worst, std::fabs(metrics::mae(p, g) - oracle::mae(p, g)));
        const auto curve = metrics::pr_curve(p, g);
        const auto o = oracle::pr_curve(p, g);
        for (int k = 0; k < 256; ++k)
            worst = std::max({worst, std::fabs(curve.precision[k] - o.precision[k]),
                              std::fabs(curve.recall[k] - o.recall[k])});
    }
    worst = std::max(worst, std::fabs(metrics::mean_f(preds, gts) - oracle::mean_f(preds, gts)));
    c.expect(worst <= 1e-12, "oracle deviation " + fmt("%.3g", worst));
    const double f = metrics::f_measure(0.8, 0.6);
    c.expect(std::fabs(f - 0.7428571) <= 1e-6, "f_measure(0.8, 0.6) = " + fmt("%.9f", f));
    return c.verdict("100 pairs, max deviation " + fmt("%.1e", worst) + ", f(0.8,0.6)=" + fmt("%.7f", f));
}

// 5. Metric fixed points and degenerate-gt conventions.
Verdict metric_fixed_points() {
    Checks c;
    Rng rng(4);
    std::vector<metrics::NamedPair> same, opposite;
    for (int t = 0; t < 30; ++t) {
        const Mask g = testing::random_mixed_mask(8, 8, rng);
        same.push_back({"s" + std::to_string(t), testing::as_map(g), g});
        opposite.push_back({"s" + std::to_string(t), testing::as_map(testing::inverted(g)), g});
    }
    const auto rs = metrics::evaluate(same), ro = metrics::evaluate(opposite);
    c.expect(rs.mean_f == 1.0 && std::fabs(rs.s - 1.0) <= 1e-12 && rs.e == 1.0 && rs.mae == 0.0,
             "pred=gt gives mF " + fmt("%.17g", rs.mean_f) + " S " + fmt("%.17g", rs.s) + " E " + fmt("%.17g", rs.e) + " MAE " +
                 fmt("%.17g", rs.mae));
    c.expect(ro.mae == 1.0 && ro.mean_f == 0.0, "pred=1-gt gives MAE " + fmt("%.17g", ro.mae) + " mF " + fmt("%.17g", ro.mean_f));
    const Mask zero(4, 4), one(4, 4, 1);
    const metrics::SaliencyMap quarter(4, 4, 0.25);
    c.expect(metrics::s_measure(quarter, zero) == 0.75, "S on empty gt is 1 - mean(pred)");
    c.expect(metrics::s_measure(quarter, one) == 0.25, "S on full gt is mean(pred)");
    c.expect(metrics::e_measure(metrics::SaliencyMap(4, 4, 0.0), zero) == 1.0, "E on empty gt, empty pred");
    c.expect(metrics::e_measure(metrics::SaliencyMap(4, 4, 1.0), zero) == 0.0, "E on empty gt, full pred");
    c.expect(metrics::e_measure(metrics::SaliencyMap(4, 4, 1.0), one) == 1.0, "E on full gt, full pred");
    // Precision is 1 without predicted positives, recall is 1 without gt positives.
    c.expect(metrics::adaptive_f(quarter, zero) == 1.0, "F on empty gt with empty binarization is 1");
    const auto empty_curve = metrics::pr_curve(quarter, zero);
    c.expect(empty_curve.recall[200] == 1.0 && empty_curve.precision[200] == 1.0, "PR on empty gt and pred");
    c.expect(metrics::mae(metrics::SaliencyMap(4, 4, 0.0), zero) == 0.0, "MAE on empty gt");
    return c.verdict("identity and complement fixed points hold on 30 masks; degenerate-gt conventions hold");
}

// 6. Forward shapes, determinism and gradient coverage.
Verdict shapes_and_determinism() {
    Checks c;
    const auto t0 = std::chrono::steady_clock::now();
    for (const int size : {64, 96, 352}) {
        const int n = size == 352 ? 1 : 2;
        Rng rng(100 + size);
        const Tensor x = testing::random_tensor({n, 3, size, size}, rng);
        SaliencyNet a(tiny(size)), b(tiny(size));
        NoGradGuard g;
        const PredictionPair pa = a.forward(Var(x)), pb = b.forward(Var(x));
        const Shape want{n, 1, size, size};
        c.expect(pa.p1_logits.shape() == want && pa.p2_logits.shape() == want,
                 "shape at " + std::to_string(size) + " is " + pa.p1_logits.shape().str());
        c.expect(bit_equal(pa.p1_logits.value(), pb.p1_logits.value()) &&
                     bit_equal(pa.p2_logits.value(), pb.p2_logits.value()),
                 "outputs differ between identically seeded models at " + std::to_string(size));
    }
    SaliencyNet net(tiny(64));
    net.set_training(true);
    Rng rng(10);
    const Tensor x = testing::random_tensor({2, 3, 64, 64}, rng);
    loss::MaskBatch masks{Tensor({2, 1, 64, 64}), Tensor({2, 1, 64, 64}), Tensor({2, 1, 64, 64}, 1.5f)};
    for (float& v : masks.gt.values()) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
    backward(loss::supervised_loss(net.forward(Var(x)), masks, {}));
    std::size_t zero = 0;
    for (const auto& p : net.registry().parameters())
        if (p.var.grad().empty() || p.var.grad().squared_norm() == 0.0) {
            if (!zero++) c.expect(false, "no gradient reaches " + p.name);
        }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c.verdict("sizes 64, 96, 352 ok; bit-identical reruns; " +
                     std::to_string(net.registry().parameters().size()) + " parameters all with nonzero gradient; " +
                     fmt("%.1fs", secs));
}

// 7. Overfit of eight synthetic images.
Verdict overfit(const fs::path& work) {
    Checks c;
    const auto t0 = std::chrono::steady_clock::now();
    data::synth_dataset(work / "overfit_data", {7, 8, 64});
    data::DatasetSpec spec;
    spec.root = work / "overfit_data";
    spec.height = spec.width = 64;
    const auto samples = data::load_dataset(spec);
    SaliencyNet net(tiny(64, 0));
    train::TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs = 200;  // one step per epoch
    tc.augment = false;
    train::FitOptions fo;
    fo.run_dir = work / "overfit_run";
    const auto result = train::fit(net, samples, tc, fo);
    const double final_loss = result.records.back().terms.total;

    net.set_training(false);
    const data::Batch b = data::make_batch(samples);
    NoGradGuard g;
    const Tensor p = combine_predictions(net.forward(Var(b.images)));
    double mae = 0;
    for (std::size_t i = 0; i < p.numel(); ++i) mae += std::fabs(p.data()[i] - b.masks.gt.data()[i]);
    mae /= static_cast<double>(p.numel());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(result.records.size() == 200, "ran " + std::to_string(result.records.size()) + " steps");
    c.expect(final_loss < 0.15, "final loss " + fmt("%.4f", final_loss));
    c.expect(mae < 0.05, "training-set MAE " + fmt("%.4f", mae));
    c.expect(secs < 300, "took " + fmt("%.0fs", secs));
    return c.verdict("200 steps, loss " + fmt("%.3f", result.records.front().terms.total) + " -> " +
                     fmt("%.4f", final_loss) + ", training-set MAE " + fmt("%.4f", mae) + ", " + fmt("%.0fs", secs));
}

// 8. Schedule endpoints and learning-rate group isolation.
Verdict schedule_and_groups(const fs::path& work) {
    Checks c;
    const long total = 1234, warm = train::warmup_steps(total, 0.05);
    c.expect(train::lr_schedule(warm, total, warm, 0.02) == 0.02, "no peak at warm-up end");
    c.expect(train::lr_schedule(warm - 1, total, warm, 0.02) == 0.02, "last warm-up step below peak");
    c.expect(train::lr_schedule(total, total, warm, 0.02) == 0.0, "nonzero at final step");

    data::synth_dataset(work / "groups_data", {3, 4, 32});
    data::DatasetSpec spec;
    spec.root = work / "groups_data";
    spec.height = spec.width = 32;
    const data::Batch batch = data::make_batch(data::load_dataset(spec));
    for (const bool backbone_only : {true, false}) {
        SaliencyNet net(tiny(32));
        train::TrainConfig tc;
        tc.batch_size = 4;
        (backbone_only ? tc.lr_branch : tc.lr_backbone) = 0.0;
        std::vector<Tensor> before;
        for (const auto& p : net.registry().parameters()) before.push_back(p.var.value());
        train::Trainer t(net, tc, 10);
        t.step(batch);
        int frozen_moved = 0, live_moved = 0;
        const auto params = net.registry().parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const bool live = (params[i].group == ParamGroup::kBackbone) == backbone_only;
            (live ? live_moved : frozen_moved) += !bit_equal(before[i], params[i].var.value());
        }
        const std::string which = backbone_only ? "backbone-only" : "branch-only";
        c.expect(frozen_moved == 0, which + " step moved " + std::to_string(frozen_moved) + " frozen tensors");
        c.expect(live_moved > 0, which + " step moved nothing");
    }
    return c.verdict("peak at step " + std::to_string(warm) + ", 0 at step " + std::to_string(total) +
                     "; backbone-only and branch-only updates isolated");
}

// 9. train -> predict -> eval through the command line, then a repeat.
Verdict cli_round_trip(const fs::path& work) {
    Checks c;
    const fs::path d = work / "cli";
    std::string log;
    c.expect(cli_run({"synth", "--out", (d / "data").string(), "--count", "6", "--size", "64"}, &log) == 0, log);
    const int trained = cli_run({"train", "--data", (d / "data").string(), "--out", (d / "run").string(), "--epochs",
                                 "1", "--set", "model.input_height=64", "--set", "model.input_width=64", "--set",
                                 "train.batch_size=3"},
                                &log);
    c.expect(trained == 0, "train exited " + std::to_string(trained) + ": " + log);
    if (trained != 0) return c.verdict("");
    std::string reports[2];
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path pred = d / ("pred" + std::to_string(rep)), ev = d / ("eval" + std::to_string(rep));
        c.expect(cli_run({"predict", "--checkpoint", (d / "run/checkpoints/final.ckpt").string(), "--input",
                          (d / "data/images").string(), "--output", pred.string()},
                         &log) == 0,
                 "predict: " + log);
        c.expect(cli_run({"eval", "--pred", pred.string(), "--gt", (d / "data/masks").string(), "--out", ev.string()},
                         &log) == 0,
                 "eval: " + log);
        if (!fs::exists(ev / "metrics.json")) return c.verdict("");
        const auto j = nlohmann::json::parse(testing::read_bytes(ev / "metrics.json"));
        for (const char* k : {"mF", "MAE", "S", "E", "n_images"})
            c.expect(j.contains(k) && !j[k].is_null(), std::string("report lacks ") + k);
        c.expect(j.value("n_images", 0) == 6, "report covers " + std::to_string(j.value("n_images", 0)) + " images");
        reports[rep] = j.dump();
    }
    c.expect(reports[0] == reports[1], "rerun changed the report");
    const auto j = nlohmann::json::parse(reports[0]);
    return c.verdict("report " + j.dump() + " reproduced exactly on rerun");
}

// 10. Ablation grid over the enhancement switch.
Verdict ablation(const fs::path& work) {
    Checks c;
    const fs::path d = work / "ablate";
    std::string log;
    c.expect(cli_run({"synth", "--out", (d / "data").string(), "--count", "4", "--size", "64"}, &log) == 0, log);
    const int code = cli_run({"ablate", "--data", (d / "data").string(), "--out", (d / "grid").string(), "--epochs",
                              "1", "--losses", "weighted", "--mre", "true,false", "--set", "model.input_height=64",
                              "--set", "model.input_width=64", "--set", "train.batch_size=4"},
                             &log);
    c.expect(code == 0, "ablate exited " + std::to_string(code) + ": " + log);
    if (code != 0) return c.verdict("");
    const std::string csv = testing::read_bytes(d / "grid/ablation.csv");
    c.expect(csv.rfind("loss,use_mre,mF,MAE,S,E\n", 0) == 0, "unexpected header");
    c.expect(std::count(csv.begin(), csv.end(), '\n') == 3, "expected two cells");
    c.expect(csv.find("weighted,true,") != std::string::npos, "missing use_mre=true cell");
    c.expect(csv.find("weighted,false,") != std::string::npos, "missing use_mre=false cell");
    const auto j = nlohmann::json::parse(testing::read_bytes(d / "grid/ablation.json"));
    for (const auto& cell : j["cells"])
        for (const char* k : {"mF", "MAE", "S", "E"})
            c.expect(cell.contains(k) && cell[k].is_number() && std::isfinite(cell[k].get<double>()),
                     std::string("cell lacks finite ") + k);
    std::string rows = csv.substr(csv.find('\n') + 1);
    std::replace(rows.begin(), rows.end(), '\n', ';');
    return c.verdict("2 cells: " + rows);
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "sodkit-acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"receptive-field exactness", receptive_fields},
        {"loss gradient check", loss_gradient},
        {"loss spot values", loss_spots},
        {"metric oracle equivalence", metric_oracles},
        {"metric fixed points", metric_fixed_points},
        {"shape and determinism", shapes_and_determinism},
        {"overfit smoke test", [&] { return overfit(work); }},
        {"schedule and optimizer contracts", [&] { return schedule_and_groups(work); }},
        {"CLI round trip", [&] { return cli_round_trip(work); }},
        {"ablation harness", [&] { return ablation(work); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("criterion %zu %s: %s - %s\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                    v.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
