#include "sodkit/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>

#include "sodkit/errors.hpp"
#include "sodkit/ops.hpp"
#include "sodkit/training.hpp"

namespace sodkit::cli {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v), 0L, 255L)); }

metrics::SaliencyMap to_map(const Tensor& t) {
    const Shape s = t.shape();
    metrics::SaliencyMap m(s.h, s.w);
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = t.data()[i];
    return m;
}

GrayImage to_gray(const metrics::SaliencyMap& m) {
    GrayImage g(m.height, m.width);
    for (std::size_t i = 0; i < m.size(); ++i) g.values[i] = to_byte(m.values[i]);
    return g;
}

void paste(RgbImage& strip, int x0, const RgbImage& tile) {
    for (int y = 0; y < tile.height; ++y)
        for (int x = 0; x < tile.width; ++x) std::copy_n(tile.at(y, x), 3, strip.at(y, x0 + x));
}

RgbImage gray_tile(const GrayImage& g) {
    RgbImage t(g.height, g.width);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) std::fill_n(t.at(y, x), 3, g.at(y, x));
    return t;
}

// Applies the device variable on top of the configuration.
void apply_device_env(RunConfig& cfg) {
    if (const char* dev = std::getenv(kDeviceEnv); dev && *dev) cfg.train.device = dev;
    if (cfg.train.device != "cpu")
        throw ConfigError("unsupported device '" + cfg.train.device + "' (only cpu is available)");
}

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config_file(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    apply_device_env(cfg);
    return cfg;
}

std::vector<data::Sample> load_training_set(RunConfig& cfg) {
    cfg.model.validate();
    cfg.train.validate();
    if (cfg.data.root.empty()) throw ConfigError("no dataset given (data.root or --data)");
    cfg.data.height = cfg.model.encoder.input_height;
    cfg.data.width = cfg.model.encoder.input_width;
    return data::load_dataset(cfg.data);
}

std::string model_id(const fs::path& checkpoint) { return checkpoint.string(); }

void write_metric_files(const metrics::MetricReport& r, const fs::path& dir) {
    fs::create_directories(dir);
    metrics::write_rows_csv(r, dir / "metrics.csv");
    metrics::write_summary_json(r, dir / "metrics.json");
}

void print_summary(std::ostream& out, const metrics::MetricReport& r) {
    out << std::fixed << std::setprecision(3) << "mF=" << r.mean_f << " MAE=" << r.mae << " S=" << r.s
        << " E=" << r.e << " n_images=" << r.n_images() << '\n'
        << std::defaultfloat;
}

fs::path train_run(RunConfig cfg, const fs::path& run_dir, const fs::path& resume, std::ostream& out) {
    auto samples = load_training_set(cfg);
    fs::create_directories(run_dir);
    write_config_file(cfg, run_dir / "config.toml");
    SaliencyNet model(cfg.model);
    train::FitOptions opt;
    opt.run_dir = run_dir;
    opt.resume_from = resume;
    const long per_epoch = train::steps_per_epoch(static_cast<long>(samples.size()), cfg.train.batch_size);
    const long total = per_epoch * cfg.train.epochs;
    opt.on_step = [&out, total, per_epoch](const train::StepRecord& r) {
        if ((r.step + 1) % per_epoch == 0 || r.step + 1 == total)
            out << "step " << r.step + 1 << "/" << total << " epoch " << r.epoch + 1 << " loss " << r.terms.total
                << '\n';
    };
    const auto result = train::fit(model, samples, cfg.train, opt);
    out << "checkpoint " << result.checkpoints.back().string() << '\n';
    return result.checkpoints.back();
}

}  // namespace

Prediction infer(const SaliencyNet& model, const RgbImage& image) {
    if (model.training()) throw ContractError("infer: model is in training mode");
    const auto& enc = model.config().encoder;
    const RgbImage sized = resize_bilinear(image, enc.input_height, enc.input_width);
    NoGradGuard guard;
    const PredictionPair pair = model.forward(Var(data::preprocess(sized)));
    return Prediction{ops::sigmoid(pair.p1_logits.value()), ops::sigmoid(pair.p2_logits.value()),
                      combine_predictions(pair)};
}

std::vector<fs::path> predict_directory(const SaliencyNet& model, const fs::path& input, const fs::path& output) {
    const auto images = list_images(input);
    if (images.empty()) throw DataError("no images in " + input.string());
    fs::create_directories(output);
    std::vector<fs::path> written;
    for (const auto& path : images) {
        const RgbImage img = read_rgb(path);
        const Prediction p = infer(model, img);
        auto map = resize_bilinear(to_map(p.combined), img.height, img.width);
        const fs::path dst = output / (path.stem().string() + ".png");
        write_png(dst, to_gray(map));
        written.push_back(dst);
    }
    return written;
}

std::vector<AblationCell> run_ablation(const RunConfig& base, const std::vector<loss::LossMode>& losses,
                                       const std::vector<bool>& mre, const fs::path& out, std::ostream& log) {
    if (losses.empty() || mre.empty()) throw ConfigError("ablation grid is empty");
    std::vector<AblationCell> cells;
    const fs::path eval_root = base.data.root;
    for (const auto mode : losses)
        for (const bool use_mre : mre) {
            RunConfig cfg = base;
            cfg.train.loss.mode = mode;
            cfg.model.use_mre = use_mre;
            std::string name = loss::to_string(mode);
            std::replace(name.begin(), name.end(), '+', '_');
            const fs::path dir = out / (name + (use_mre ? "-mre" : "-nomre"));
            log << "cell " << loss::to_string(mode) << " use_mre=" << (use_mre ? "true" : "false") << '\n';
            const fs::path ckpt = train_run(cfg, dir, {}, log);
            const auto model = train::load_model(ckpt);
            predict_directory(*model, eval_root / cfg.data.image_dir, dir / "predictions");
            metrics::EvalOptions eo{cfg.emeasure, eval_root.filename().string(), model_id(ckpt)};
            auto report = metrics::evaluate_dataset(dir / "predictions", eval_root / cfg.data.mask_dir, eo);
            write_metric_files(report, dir);
            cells.push_back({mode, use_mre, std::move(report), dir});
        }

    std::ofstream csv(out / "ablation.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot write " + (out / "ablation.csv").string());
    csv << std::setprecision(17) << "loss,use_mre,mF,MAE,S,E\n";
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& c : cells) {
        const auto& r = c.report;
        csv << loss::to_string(c.loss) << ',' << (c.use_mre ? "true" : "false") << ',' << r.mean_f << ',' << r.mae
            << ',' << r.s << ',' << r.e << '\n';
        nlohmann::ordered_json j;
        j["loss"] = loss::to_string(c.loss);
        j["use_mre"] = c.use_mre;
        j["mF"] = r.mean_f;
        j["MAE"] = r.mae;
        j["S"] = r.s;
        j["E"] = r.e;
        j["n_images"] = r.n_images();
        j["run_dir"] = c.run_dir.string();
        rows.push_back(std::move(j));
    }
    std::ofstream js(out / "ablation.json", std::ios::trunc);
    js << nlohmann::ordered_json{{"cells", rows}}.dump(2) << '\n';
    return cells;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"sodkit: train, run and evaluate salient object detection models"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every command");

    std::string config_path, data_root, out_dir, checkpoint, input_dir, output_dir, pred_dir, gt_dir, resume;
    std::vector<std::string> overrides;
    std::optional<int> epochs;
    std::string emeasure = "adaptive", dataset_name;

    auto* keys = app.add_subcommand("keys", "List every configuration key with its default");

    data::SynthOptions synth_opt;
    auto* synth = app.add_subcommand("synth", "Write a synthetic image/mask dataset");
    synth->add_option("--out", out_dir, "Dataset directory")->required();
    synth->add_option("--seed", synth_opt.seed, "Generator seed")->capture_default_str();
    synth->add_option("--count", synth_opt.count, "Number of pairs")->capture_default_str();
    synth->add_option("--size", synth_opt.size, "Side length in pixels (multiple of 32)")->capture_default_str();

    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Config file ([section] key = value)")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a key: dotted.key=value (repeatable)");
        cmd->add_option("--epochs", epochs, "Shortcut for train.epochs");
        cmd->add_option("--data", data_root, "Shortcut for data.root");
        cmd->add_option("--out", out_dir, "Run directory")->required();
    };
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    add_config_flags(train_cmd);
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

    auto* predict = app.add_subcommand("predict", "Write saliency PNGs for a directory of images");
    predict->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    predict->add_option("--input", input_dir, "Image directory")->required();
    predict->add_option("--output", output_dir, "Prediction directory")->required();

    auto add_eval_flags = [&](CLI::App* cmd) {
        cmd->add_option("--pred", pred_dir, "Prediction PNG directory")->required();
        cmd->add_option("--gt", gt_dir, "Ground-truth mask directory")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_option("--dataset", dataset_name, "Dataset name recorded in the report");
    };
    auto* eval = app.add_subcommand("eval", "Score predictions against ground truth (mF, MAE, S, E)");
    add_eval_flags(eval);
    eval->add_option("--emeasure", emeasure, "E-measure binarization")
        ->check(CLI::IsMember({"adaptive", "mean"}))
        ->capture_default_str();

    auto* curves = app.add_subcommand("curves", "Export the dataset-mean PR curve as CSV and PNG plot");
    add_eval_flags(curves);

    auto* visualize = app.add_subcommand("visualize", "Write input | gt | P1 | P2 | combined strips");
    visualize->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    visualize->add_option("--input", input_dir, "Image directory")->required();
    visualize->add_option("--gt", gt_dir, "Optional ground-truth mask directory");
    visualize->add_option("--output", output_dir, "Strip directory")->required();

    std::vector<std::string> loss_names{"bce", "iou", "bce+iou", "weighted"};
    std::vector<std::string> mre_flags{"true", "false"};
    auto* ablate = app.add_subcommand("ablate", "Train and score a loss x MRE grid");
    add_config_flags(ablate);
    ablate->add_option("--losses", loss_names, "Loss modes to include")
        ->delimiter(',')
        ->check(CLI::IsMember({"bce", "iou", "bce+iou", "weighted"}))
        ->capture_default_str();
    ablate->add_option("--mre", mre_flags, "use_mre values to include")
        ->delimiter(',')
        ->check(CLI::IsMember({"true", "false"}))
        ->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigFailure;
    }

    try {
        if (keys->parsed()) {
            out << describe_config_keys();
        } else if (synth->parsed()) {
            data::synth_dataset(out_dir, synth_opt);
            out << "wrote " << synth_opt.count << " pairs to " << out_dir << '\n';
        } else if (train_cmd->parsed() || ablate->parsed()) {
            RunConfig cfg = resolve_config(config_path, overrides);
            if (epochs) cfg.train.epochs = *epochs;
            if (!data_root.empty()) cfg.data.root = data_root;
            if (train_cmd->parsed()) {
                train_run(cfg, out_dir, resume, out);
            } else {
                std::vector<loss::LossMode> modes;
                for (const auto& n : loss_names) modes.push_back(loss::parse_loss_mode(n));
                std::vector<bool> mre;
                for (const auto& f : mre_flags) mre.push_back(f == "true");
                fs::create_directories(out_dir);
                const auto cells = run_ablation(cfg, modes, mre, out_dir, out);
                out << "loss,use_mre,mF,MAE,S,E\n" << std::fixed << std::setprecision(3);
                for (const auto& c : cells)
                    out << loss::to_string(c.loss) << ',' << (c.use_mre ? "true" : "false") << ',' << c.report.mean_f
                        << ',' << c.report.mae << ',' << c.report.s << ',' << c.report.e << '\n';
                out << std::defaultfloat;
            }
        } else if (predict->parsed()) {
            RunConfig env;
            apply_device_env(env);
            const auto model = train::load_model(checkpoint);
            const auto written = predict_directory(*model, input_dir, output_dir);
            out << "wrote " << written.size() << " predictions to " << output_dir << '\n';
        } else if (eval->parsed()) {
            metrics::EvalOptions eo{metrics::parse_emeasure_mode(emeasure), dataset_name, pred_dir};
            const auto report = metrics::evaluate_dataset(pred_dir, gt_dir, eo);
            write_metric_files(report, out_dir);
            print_summary(out, report);
        } else if (curves->parsed()) {
            metrics::EvalOptions eo{metrics::EMeasureMode::kAdaptive, dataset_name, pred_dir};
            const auto report = metrics::evaluate_dataset(pred_dir, gt_dir, eo);
            fs::create_directories(out_dir);
            metrics::write_pr_csv(report.curve, fs::path(out_dir) / "pr_curve.csv");
            metrics::write_pr_plot(report.curve, fs::path(out_dir) / "pr_curve.png",
                                   dataset_name.empty() ? "PR curve" : dataset_name);
            out << "wrote " << (fs::path(out_dir) / "pr_curve.csv").string() << " and pr_curve.png\n";
        } else if (visualize->parsed()) {
            RunConfig env;
            apply_device_env(env);
            const auto model = train::load_model(checkpoint);
            const auto& enc = model->config().encoder;
            const int th = enc.input_height, tw = enc.input_width;
            std::map<std::string, fs::path> gts;
            if (!gt_dir.empty())
                for (const auto& p : list_images(gt_dir)) gts.emplace(p.stem().string(), p);
            const auto images = list_images(input_dir);
            if (images.empty()) throw DataError("no images in " + input_dir);
            fs::create_directories(output_dir);
            for (const auto& path : images) {
                const RgbImage img = read_rgb(path);
                const Prediction p = infer(*model, img);
                std::vector<RgbImage> tiles{resize_bilinear(img, th, tw)};
                if (const auto it = gts.find(path.stem().string()); it != gts.end()) {
                    const GrayImage g = resize_nearest(read_gray(it->second), th, tw);
                    GrayImage bin(th, tw);
                    for (std::size_t i = 0; i < g.size(); ++i) bin.values[i] = g.values[i] > 127 ? 255 : 0;
                    tiles.push_back(gray_tile(bin));
                }
                for (const Tensor* t : {&p.p1, &p.p2, &p.combined}) tiles.push_back(gray_tile(to_gray(to_map(*t))));
                RgbImage strip(th, tw * static_cast<int>(tiles.size()));
                for (std::size_t i = 0; i < tiles.size(); ++i) paste(strip, static_cast<int>(i) * tw, tiles[i]);
                write_png(fs::path(output_dir) / (path.stem().string() + ".png"), strip);
            }
            out << "wrote " << images.size() << " strips to " << output_dir << '\n';
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const ContractError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataFailure;
    } catch (const DimensionError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataFailure;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericFailure;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataFailure;
    }
    return kOk;
}

}  // namespace sodkit::cli
