#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "sodkit/metrics.hpp"
#include "sodkit/rng.hpp"
#include "sodkit/tensor.hpp"

namespace testing {

// Fresh directory removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("sodkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

  private:
    std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline sodkit::Tensor random_tensor(sodkit::Shape s, sodkit::Rng& rng, double scale = 1.0) {
    sodkit::Tensor t(s);
    for (float& v : t.values()) v = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

inline sodkit::Mask random_mask(int h, int w, sodkit::Rng& rng, double p = 0.5) {
    sodkit::Mask m(h, w);
    for (auto& v : m.values) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

// Mask with both classes present.
inline sodkit::Mask random_mixed_mask(int h, int w, sodkit::Rng& rng) {
    for (;;) {
        sodkit::Mask m = random_mask(h, w, rng, rng.uniform(0.1, 0.9));
        std::size_t ones = 0;
        for (auto v : m.values) ones += v;
        if (ones > 0 && ones < m.size()) return m;
    }
}

inline sodkit::metrics::SaliencyMap random_map(int h, int w, sodkit::Rng& rng) {
    sodkit::metrics::SaliencyMap m(h, w);
    for (auto& v : m.values) {
        // Mix of exact grid values, extremes and arbitrary reals.
        const double r = rng.uniform();
        if (r < 0.2) v = rng.uniform_int(0, 255) / 255.0;
        else if (r < 0.25) v = 0.0;
        else if (r < 0.3) v = 1.0;
        else v = rng.uniform();
    }
    return m;
}

inline sodkit::metrics::SaliencyMap as_map(const sodkit::Mask& m) {
    sodkit::metrics::SaliencyMap out(m.height, m.width);
    for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = m.values[i];
    return out;
}

inline sodkit::Mask inverted(const sodkit::Mask& m) {
    sodkit::Mask out = m;
    for (auto& v : out.values) v = 1 - v;
    return out;
}

}  // namespace testing
