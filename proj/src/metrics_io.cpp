#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sodkit/image_io.hpp"
#include "sodkit/metrics.hpp"

namespace sodkit::metrics {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> index_by_stem(const fs::path& dir) {
    std::map<std::string, fs::path> idx;
    for (const auto& p : list_images(dir)) {
        const std::string stem = p.stem().string();
        if (!idx.emplace(stem, p).second) throw DataError("duplicate stem '" + stem + "' in " + dir.string());
    }
    return idx;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    os << std::setprecision(17);
    return os;
}

}  // namespace

MetricReport evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, const EvalOptions& opt) {
    const auto preds = index_by_stem(pred_dir);
    const auto gts = index_by_stem(gt_dir);
    for (const auto& [stem, _] : preds)
        if (!gts.count(stem)) throw DataError("prediction '" + stem + "' has no ground truth in " + gt_dir.string());
    for (const auto& [stem, _] : gts)
        if (!preds.count(stem)) throw DataError("ground truth '" + stem + "' has no prediction in " + pred_dir.string());
    if (preds.empty()) throw DataError("no images in " + pred_dir.string());

    std::vector<NamedPair> pairs;
    for (const auto& [stem, pred_path] : preds) {
        const GrayImage g = read_gray(gts.at(stem));
        const GrayImage p = read_gray(pred_path);
        NamedPair pair;
        pair.stem = stem;
        pair.gt = Mask(g.height, g.width);
        for (std::size_t i = 0; i < g.size(); ++i) pair.gt.values[i] = g.values[i] > 127;
        SaliencyMap m(p.height, p.width);
        for (std::size_t i = 0; i < p.size(); ++i) m.values[i] = p.values[i] / 255.0;
        m = resize_bilinear(m, g.height, g.width);
        for (auto& v : m.values) v = std::clamp(v, 0.0, 1.0);
        pair.pred = std::move(m);
        pairs.push_back(std::move(pair));
    }
    return evaluate(std::move(pairs), opt);
}

void write_rows_csv(const MetricReport& report, const fs::path& path) {
    auto os = open_out(path);
    os << "stem,threshold,F,MAE,S,E\n";
    for (const auto& r : report.rows)
        os << r.stem << ',' << r.threshold << ',' << r.f << ',' << r.mae << ',' << r.s << ',' << r.e << '\n';
}

void write_summary_json(const MetricReport& report, const fs::path& path) {
    nlohmann::ordered_json j;
    j["mF"] = report.mean_f;
    j["MAE"] = report.mae;
    j["S"] = report.s;
    j["E"] = report.e;
    j["n_images"] = report.n_images();
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

void write_pr_csv(const PrCurve& curve, const fs::path& path) {
    auto os = open_out(path);
    os << "threshold,precision,recall\n";
    for (int k = 0; k < kThresholds; ++k)
        os << curve.thresholds[k] << ',' << curve.precision[k] << ',' << curve.recall[k] << '\n';
}

void write_pr_plot(const PrCurve& curve, const fs::path& path, const std::string& title) {
    constexpr int kSize = 512, kMargin = 56;
    const int span = kSize - 2 * kMargin;
    cv::Mat canvas(kSize, kSize, CV_8UC3, cv::Scalar(255, 255, 255));
    auto to_px = [&](double recall, double precision) {
        return cv::Point(kMargin + static_cast<int>(std::lround(recall * span)),
                         kSize - kMargin - static_cast<int>(std::lround(precision * span)));
    };
    for (int t = 0; t <= 10; ++t) {
        const double v = t / 10.0;
        const cv::Scalar grid(225, 225, 225);
        cv::line(canvas, to_px(v, 0), to_px(v, 1), grid, 1);
        cv::line(canvas, to_px(0, v), to_px(1, v), grid, 1);
        if (t % 2 == 0) {
            char label[8];
            std::snprintf(label, sizeof label, "%.1f", v);
            cv::putText(canvas, label, to_px(v, 0) + cv::Point(-12, 20), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                        cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
            cv::putText(canvas, label, to_px(0, v) + cv::Point(-34, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4,
                        cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
        }
    }
    cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), cv::Scalar(0, 0, 0), 1);
    std::vector<cv::Point> pts;
    for (int k = 0; k < kThresholds; ++k) pts.push_back(to_px(curve.recall[k], curve.precision[k]));
    cv::polylines(canvas, pts, false, cv::Scalar(40, 40, 220), 2, cv::LINE_AA);
    cv::putText(canvas, "Recall", cv::Point(kSize / 2 - 24, kSize - 14), cv::FONT_HERSHEY_SIMPLEX, 0.5,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(canvas, "Precision", cv::Point(6, kMargin - 12), cv::FONT_HERSHEY_SIMPLEX, 0.5,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(canvas, title, cv::Point(kMargin + 80, kMargin - 12), cv::FONT_HERSHEY_SIMPLEX, 0.5,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    if (!cv::imwrite(path.string(), canvas)) throw DataError("cannot write plot: " + path.string());
}

}  // namespace sodkit::metrics
