#include <doctest.h>

#include <cstring>
#include <json.hpp>

#include "sodkit/errors.hpp"
#include "sodkit/training.hpp"
#include "support/helpers.hpp"

using namespace sodkit;
using namespace sodkit::train;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model(int size = 32) {
    ModelConfig m;
    m.encoder.input_height = m.encoder.input_width = size;
    m.encoder.side_channels = {8, 8, 16, 16};
    m.mre.unified_channels = 16;
    m.seed = 5;
    return m;
}

std::vector<data::Sample> small_set(const fs::path& root, int count = 4, int size = 32) {
    data::synth_dataset(root, {3, count, size});
    data::DatasetSpec spec;
    spec.root = root;
    spec.height = spec.width = size;
    return data::load_dataset(spec);
}

TrainConfig quick_config(int batch = 4, int epochs = 1) {
    TrainConfig c;
    c.batch_size = batch;
    c.epochs = epochs;
    c.seed = 9;
    return c;
}

std::vector<Tensor> snapshot(const SaliencyNet& net) {
    std::vector<Tensor> out;
    for (const auto& p : net.registry().parameters()) out.push_back(p.var.value());
    return out;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0;
}

bool is_feedback_path(const std::string& name) {
    return name.rfind("pfs.feedback_", 0) == 0 || name.rfind("pfs.fuse_c2.", 0) == 0 || name.rfind("pfs.head2.", 0) == 0;
}

}  // namespace

TEST_SUITE("training") {
    TEST_CASE("schedule junction, endpoint, midpoint and continuity") {
        const long total = 1000, warm = 50;
        const double peak = 0.02;
        CHECK(lr_schedule(warm, total, warm, peak) == peak);
        CHECK(lr_schedule(warm - 1, total, warm, peak) == peak);
        CHECK(lr_schedule(total, total, warm, peak) == 0.0);
        CHECK(lr_schedule((warm + total) / 2, total, warm, peak) == doctest::Approx(peak / 2));
        CHECK(lr_schedule(0, total, warm, peak) == doctest::Approx(peak / warm));
        double prev = 0;
        for (long s = 0; s <= total; ++s) {
            const double lr = lr_schedule(s, total, warm, peak);
            REQUIRE(lr >= 0.0);
            REQUIRE(std::fabs(lr - prev) <= peak / warm + 1e-15);
            prev = lr;
        }
        CHECK(lr_schedule(0, 1, 1, peak) == peak);
        CHECK(lr_schedule(1, 1, 1, peak) == 0.0);
        CHECK_THROWS_AS(lr_schedule(-1, total, warm, peak), ContractError);
        CHECK_THROWS_AS(lr_schedule(total + 1, total, warm, peak), ContractError);
        CHECK_THROWS_AS(lr_schedule(0, total, 0, peak), ContractError);
        CHECK_THROWS_AS(lr_schedule(0, total, total + 1, peak), ContractError);
        CHECK(warmup_steps(1000, 0.05) == 50);
        CHECK(warmup_steps(1, 0.05) == 1);
        CHECK(steps_per_epoch(8, 8) == 1);
        CHECK(steps_per_epoch(9, 8) == 2);
    }

    TEST_CASE("config validation") {
        TrainConfig c;
        CHECK_NOTHROW(c.validate());
        CHECK(c.lr_branch == doctest::Approx(10 * c.lr_backbone));
        c.device = "cuda";
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = TrainConfig{};
        c.batch_size = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = TrainConfig{};
        c.lr_branch = -1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = TrainConfig{};
        c.loss.beta = 1.5;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }

    TEST_CASE("SGD follows momentum semantics with coupled decay") {
        ParameterRegistry reg;
        Var w = reg.add_parameter("w", Tensor({1, 1, 1, 2}, std::vector<float>{1.0f, -2.0f}), ParamGroup::kBranch, true);
        Var b = reg.add_parameter("b", Tensor({1, 1, 1, 1}, 3.0f), ParamGroup::kBackbone, false);
        Sgd sgd(reg, 0.9, 0.1);
        // Zero gradient: one step scales decayed weights by (1 - lr * wd).
        sgd.step(0.5, 0.5);
        CHECK(w.value().data()[0] == doctest::Approx(1.0 * (1 - 0.5 * 0.1)));
        CHECK(w.value().data()[1] == doctest::Approx(-2.0 * (1 - 0.5 * 0.1)));
        CHECK(b.value().data()[0] == 3.0f);

        ParameterRegistry r2;
        Var v = r2.add_parameter("v", Tensor({1, 1, 1, 1}, 1.0f), ParamGroup::kBranch, false);
        Sgd s2(r2, 0.9, 0.0);
        v.node()->grad_buffer().fill(2.0f);
        s2.step(0, 0.1);
        CHECK(v.value().data()[0] == doctest::Approx(1 - 0.1 * 2));
        s2.step(0, 0.1);
        CHECK(v.value().data()[0] == doctest::Approx(1 - 0.1 * 2 - 0.1 * (0.9 * 2 + 2)));
    }

    TEST_CASE("gradient clipping bounds the global norm") {
        ParameterRegistry reg;
        Var a = reg.add_parameter("a", Tensor({1, 1, 1, 2}), ParamGroup::kBranch, true);
        a.node()->grad_buffer() = Tensor({1, 1, 1, 2}, std::vector<float>{3, 4});
        CHECK(clip_grad_norm(reg, 1.0) == doctest::Approx(5.0));
        CHECK(a.grad().data()[0] == doctest::Approx(0.6).epsilon(1e-5));
        CHECK(clip_grad_norm(reg, 10.0) == doctest::Approx(1.0).epsilon(1e-5));
    }

    TEST_CASE("zero learning rates leave parameters unchanged") {
        testing::TempDir d("zero");
        const auto samples = small_set(d / "data");
        SaliencyNet net(small_model());
        TrainConfig c = quick_config();
        c.lr_backbone = c.lr_branch = 0;
        Trainer t(net, c, 1);
        const auto before = snapshot(net);
        t.step(data::make_batch(samples));
        const auto after = snapshot(net);
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(same_bits(before[i], after[i]));
    }

    TEST_CASE("learning-rate groups are isolated") {
        testing::TempDir d("groups");
        const auto samples = small_set(d / "data");
        for (const bool backbone_only : {true, false}) {
            CAPTURE(backbone_only);
            SaliencyNet net(small_model());
            TrainConfig c = quick_config();
            (backbone_only ? c.lr_branch : c.lr_backbone) = 0.0;
            Trainer t(net, c, 10);
            const auto before = snapshot(net);
            t.step(data::make_batch(samples));
            const auto params = net.registry().parameters();
            int moved_frozen = 0, moved_live = 0;
            for (std::size_t i = 0; i < params.size(); ++i) {
                const bool live = (params[i].group == ParamGroup::kBackbone) == backbone_only;
                const bool moved = !same_bits(before[i], params[i].var.value());
                (live ? moved_live : moved_frozen) += moved;
            }
            CHECK(moved_frozen == 0);
            CHECK(moved_live > 0);
        }
    }

    TEST_CASE("feedback path gets gradient only through the second prediction") {
        testing::TempDir d("beta");
        const auto samples = small_set(d / "data");
        const data::Batch batch = data::make_batch(samples);
        for (const double beta : {1.0, 0.5}) {
            SaliencyNet net(small_model());
            net.set_training(true);
            loss::LossConfig lc;
            lc.beta = beta;
            backward(loss::supervised_loss(net.forward(Var(batch.images)), batch.masks, lc));
            for (const auto& p : net.registry().parameters()) {
                if (!is_feedback_path(p.name)) continue;
                const double g = p.var.grad().empty() ? 0.0 : p.var.grad().squared_norm();
                CAPTURE(p.name);
                if (beta == 1.0) CHECK(g == 0.0);
                else CHECK(g > 0.0);
            }
        }
    }

    TEST_CASE("identical seeds give identical trajectories") {
        testing::TempDir d("det");
        const auto samples = small_set(d / "data");
        std::vector<double> losses[2];
        for (auto& l : losses) {
            SaliencyNet net(small_model());
            FitOptions o;
            o.run_dir = d / ("run" + std::to_string(&l - losses));
            const auto r = fit(net, samples, quick_config(2, 2), o);
            for (const auto& rec : r.records) l.push_back(rec.terms.total);
        }
        CHECK(losses[0].size() == 4);
        CHECK(losses[0] == losses[1]);
    }

    TEST_CASE("non-finite loss is fatal and names the step") {
        testing::TempDir d("nan");
        const auto samples = small_set(d / "data");
        const data::Batch b = data::make_batch(samples);
        SaliencyNet net(small_model());
        Var w = net.registry().parameters().front().var;
        w.mutable_value().fill(std::numeric_limits<float>::quiet_NaN());
        Trainer t(net, quick_config(), 4);
        try {
            t.step(b);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("step 0") != std::string::npos);
            CHECK(std::string(e.what()).find("wbce1") != std::string::npos);
        }
    }

    TEST_CASE("checkpoints: idempotent round trip, config checks, exact resume") {
        testing::TempDir d("ckpt");
        const auto samples = small_set(d / "data");
        const data::Batch batch = data::make_batch(samples);
        const TrainConfig c = quick_config();

        SaliencyNet net(small_model());
        Trainer t(net, c, 3);
        t.step(batch);
        t.save_checkpoint(d / "a.ckpt");
        t.step(batch);
        const auto continuous = snapshot(net);

        const Checkpoint ck = read_checkpoint(d / "a.ckpt");
        CHECK(ck.step == 1);
        CHECK(ck.model.compatible_with(small_model()));
        CHECK(ck.train == c);
        SaliencyNet net2(ck.model, WeightSource::kRandom);
        Trainer t2(net2, c, 3);
        t2.resume(ck);
        t2.save_checkpoint(d / "b.ckpt");
        CHECK(testing::read_bytes(d / "a.ckpt") == testing::read_bytes(d / "b.ckpt"));
        t2.step(batch);
        const auto resumed = snapshot(net2);
        for (std::size_t i = 0; i < continuous.size(); ++i) CHECK(same_bits(continuous[i], resumed[i]));

        ModelConfig other = small_model();
        other.use_mre = false;
        SaliencyNet wrong(other, WeightSource::kRandom);
        CHECK_THROWS_AS(restore_model(wrong, ck), ConfigError);
        TrainConfig c2 = c;
        c2.momentum = 0.5;
        Trainer t3(net2, c2, 3);
        CHECK_THROWS_AS(t3.resume(ck), ConfigError);

        const auto model = load_model(d / "a.ckpt");
        CHECK(model->config().compatible_with(ck.model));
        CHECK_FALSE(model->training());

        std::string bytes = testing::read_bytes(d / "a.ckpt");
        bytes.resize(bytes.size() / 2);
        std::ofstream(d / "bad.ckpt", std::ios::binary) << bytes;
        CHECK_THROWS_AS(read_checkpoint(d / "bad.ckpt"), DataError);
    }

    TEST_CASE("fit writes per-epoch checkpoints, a log row per step, and resumes exactly") {
        testing::TempDir d("fit");
        const auto samples = small_set(d / "data", 5);
        const TrainConfig c = quick_config(2, 2);
        SaliencyNet net(small_model());
        FitOptions o;
        o.run_dir = d / "run";
        const FitResult r = fit(net, samples, c, o);
        CHECK(r.records.size() == 6);
        REQUIRE(r.checkpoints.size() == 2);
        CHECK(r.checkpoints[0].filename() == "epoch_001.ckpt");
        CHECK(r.checkpoints[1].filename() == "final.ckpt");
        const std::string log = testing::read_bytes(r.log);
        CHECK(std::count(log.begin(), log.end(), '\n') == 6);
        const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
        for (const char* k : {"step", "epoch", "lr_backbone", "lr_branch", "loss", "wbce1", "wiou1", "wbce2", "wiou2"})
            CHECK(first.contains(k));
        CHECK(r.records.back().lr_branch > 0.0);

        SaliencyNet net2(small_model());
        FitOptions o2;
        o2.run_dir = d / "resumed";
        o2.resume_from = r.checkpoints[0];
        const FitResult r2 = fit(net2, samples, c, o2);
        CHECK(r2.records.size() == 3);
        CHECK(r2.records.front().step == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(r2.records[i].terms.total == r.records[3 + i].terms.total);
        CHECK(testing::read_bytes(r.checkpoints[1]) == testing::read_bytes(r2.checkpoints.back()));
    }

    TEST_CASE("one step per epoch when the batch covers the set") {
        testing::TempDir d("one");
        const auto samples = small_set(d / "data", 8);
        SaliencyNet net(small_model());
        FitOptions o;
        o.run_dir = d / "run";
        const FitResult r = fit(net, samples, quick_config(8, 1), o);
        CHECK(r.records.size() == 1);
        CHECK(r.checkpoints.size() == 1);
    }

    TEST_CASE("epoch order is a seeded permutation") {
        const auto a = epoch_order(10, 3, 0), b = epoch_order(10, 3, 0), c = epoch_order(10, 3, 1);
        CHECK(a == b);
        CHECK(a != c);
        auto sorted = a;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
    }

    TEST_CASE("loss falls on a small overfit run") {
        testing::TempDir d("fall");
        const auto samples = small_set(d / "data", 4);
        SaliencyNet net(small_model());
        TrainConfig c = quick_config(4, 30);
        c.augment = false;
        FitOptions o;
        o.run_dir = d / "run";
        const FitResult r = fit(net, samples, c, o);
        CHECK(r.records.back().terms.total < 0.7 * r.records.front().terms.total);
    }
}
