#include "sodkit/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "sodkit/errors.hpp"

namespace sodkit {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* expected) {
    const std::string v = trim(text);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, text, expected);
    return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    if (v == "true") return true;
    if (v == "false") return false;
    bad_value(key, text, "true or false");
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

// Integer groups of a (possibly nested) bracketed list, e.g. "[[1,2],[3,4]]"
// -> {{1,2},{3,4}}, "[1,2]" -> {{1,2}}.
std::vector<std::vector<int>> parse_int_groups(const std::string& key, const std::string& text) {
    std::vector<std::vector<int>> groups;
    std::vector<int>* current = nullptr;
    int depth = 0;
    std::string token;
    auto flush = [&] {
        const std::string t = trim(token);
        token.clear();
        if (t.empty()) return;
        if (!current) bad_value(key, text, "a bracketed integer list");
        current->push_back(parse_number<int>(key, t, "a bracketed integer list"));
    };
    for (char ch : text) {
        if (ch == '[') {
            ++depth;
            groups.emplace_back();
            current = &groups.back();
        } else if (ch == ']') {
            flush();
            if (--depth < 0) bad_value(key, text, "balanced brackets");
            current = nullptr;
        } else if (ch == ',') {
            flush();
        } else {
            token += ch;
        }
    }
    flush();
    if (depth != 0) bad_value(key, text, "balanced brackets");
    std::erase_if(groups, [](const std::vector<int>& g) { return g.empty(); });
    return groups;
}

std::string format_ints(std::span<const int> v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
}

template <std::size_t N>
std::array<int, N> int_array(const std::string& key, const std::vector<int>& v) {
    if (v.size() != N) throw ConfigError(key + " needs exactly " + std::to_string(N) + " integers");
    std::array<int, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

std::vector<ConfigKey> build_keys() {
    using train::TrainConfig;
    std::vector<ConfigKey> k;
    auto add = [&](std::string key, std::string doc, auto get, auto set) {
        k.push_back(ConfigKey{std::move(key), std::move(doc), get, set});
    };

    add("model.encoder", "encoder kind: tiny | resnet50-pretrained",
        [](const RunConfig& c) { return to_string(c.model.encoder.kind); },
        [](RunConfig& c, const std::string& v) { c.model.encoder.kind = parse_encoder_kind(trim(v)); });
    add("model.side_channels", "tiny encoder widths at strides 4, 8, 16, 32",
        [](const RunConfig& c) { return format_ints(c.model.encoder.side_channels); },
        [](RunConfig& c, const std::string& v) {
            const auto g = parse_int_groups("model.side_channels", v);
            if (g.size() != 1) throw ConfigError("model.side_channels must be a flat list");
            c.model.encoder.side_channels = int_array<4>("model.side_channels", g[0]);
        });
    add("model.input_height", "network input height (multiple of 32)",
        [](const RunConfig& c) { return std::to_string(c.model.encoder.input_height); },
        [](RunConfig& c, const std::string& v) {
            c.model.encoder.input_height = parse_number<int>("model.input_height", v, "an integer");
        });
    add("model.input_width", "network input width (multiple of 32)",
        [](const RunConfig& c) { return std::to_string(c.model.encoder.input_width); },
        [](RunConfig& c, const std::string& v) {
            c.model.encoder.input_width = parse_number<int>("model.input_width", v, "an integer");
        });
    add("model.weights", "encoder weight archive (resnet50-pretrained only)",
        [](const RunConfig& c) { return c.model.encoder.weights_path; },
        [](RunConfig& c, const std::string& v) { c.model.encoder.weights_path = v; });
    add("model.unified_channels", "width of every enhanced side and fusion map",
        [](const RunConfig& c) { return std::to_string(c.model.mre.unified_channels); },
        [](RunConfig& c, const std::string& v) {
            c.model.mre.unified_channels = parse_number<int>("model.unified_channels", v, "an integer");
        });
    add("model.rates", "dilation rates of the three branches, per side 2..5",
        [](const RunConfig& c) {
            std::string s = "[";
            for (std::size_t i = 0; i < c.model.mre.rates.size(); ++i)
                s += (i ? ", " : "") + format_ints(c.model.mre.rates[i]);
            return s + "]";
        },
        [](RunConfig& c, const std::string& v) {
            const auto g = parse_int_groups("model.rates", v);
            if (g.size() != 4) throw ConfigError("model.rates needs four groups of three rates");
            for (int i = 0; i < 4; ++i) c.model.mre.rates[i] = int_array<3>("model.rates", g[i]);
        });
    add("model.use_mre", "enable the dilated branches of each enhancement block",
        [](const RunConfig& c) { return format_bool(c.model.use_mre); },
        [](RunConfig& c, const std::string& v) { c.model.use_mre = parse_bool("model.use_mre", v); });
    add("model.seed", "weight initialization seed",
        [](const RunConfig& c) { return std::to_string(c.model.seed); },
        [](RunConfig& c, const std::string& v) {
            c.model.seed = parse_number<std::uint64_t>("model.seed", v, "a non-negative integer");
        });

    auto real = [&](const char* key, const char* doc, double TrainConfig::*field) {
        add(key, doc, [field](const RunConfig& c) { return format_double(c.train.*field); },
            [key = std::string(key), field](RunConfig& c, const std::string& v) {
                c.train.*field = parse_number<double>(key, v, "a number");
            });
    };
    real("train.lr_backbone", "peak learning rate of encoder parameters", &TrainConfig::lr_backbone);
    real("train.lr_branch", "peak learning rate of all other parameters", &TrainConfig::lr_branch);
    real("train.momentum", "SGD momentum", &TrainConfig::momentum);
    real("train.weight_decay", "L2 decay on conv weights", &TrainConfig::weight_decay);
    add("train.batch_size", "images per step",
        [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
        [](RunConfig& c, const std::string& v) {
            c.train.batch_size = parse_number<int>("train.batch_size", v, "an integer");
        });
    add("train.epochs", "passes over the training set",
        [](const RunConfig& c) { return std::to_string(c.train.epochs); },
        [](RunConfig& c, const std::string& v) { c.train.epochs = parse_number<int>("train.epochs", v, "an integer"); });
    real("train.warmup_fraction", "share of total steps spent warming up", &TrainConfig::warmup_fraction);
    real("train.grad_clip", "global gradient norm limit, 0 disables", &TrainConfig::grad_clip);
    add("train.augment", "random horizontal flips",
        [](const RunConfig& c) { return format_bool(c.train.augment); },
        [](RunConfig& c, const std::string& v) { c.train.augment = parse_bool("train.augment", v); });
    add("train.seed", "data order and augmentation seed",
        [](const RunConfig& c) { return std::to_string(c.train.seed); },
        [](RunConfig& c, const std::string& v) {
            c.train.seed = parse_number<std::uint64_t>("train.seed", v, "a non-negative integer");
        });
    add("train.device", "compute device (cpu)", [](const RunConfig& c) { return c.train.device; },
        [](RunConfig& c, const std::string& v) { c.train.device = trim(v); });

    add("loss.mode", "bce | iou | bce+iou | weighted",
        [](const RunConfig& c) { return loss::to_string(c.train.loss.mode); },
        [](RunConfig& c, const std::string& v) {
            try {
                c.train.loss.mode = loss::parse_loss_mode(trim(v));
            } catch (const ContractError& e) {
                throw ConfigError(e.what());
            }
        });
    add("loss.beta", "weight of the first prediction; the feedback one gets 1 - beta",
        [](const RunConfig& c) { return format_double(c.train.loss.beta); },
        [](RunConfig& c, const std::string& v) {
            c.train.loss.beta = parse_number<double>("loss.beta", v, "a number");
        });
    add("loss.clamp_epsilon", "probability clamp inside the log terms",
        [](const RunConfig& c) { return format_double(c.train.loss.prob_clamp_epsilon); },
        [](RunConfig& c, const std::string& v) {
            c.train.loss.prob_clamp_epsilon = parse_number<double>("loss.clamp_epsilon", v, "a number");
        });

    add("data.root", "dataset directory", [](const RunConfig& c) { return c.data.root.string(); },
        [](RunConfig& c, const std::string& v) { c.data.root = v; });
    add("data.images", "image subdirectory", [](const RunConfig& c) { return c.data.image_dir; },
        [](RunConfig& c, const std::string& v) { c.data.image_dir = v; });
    add("data.masks", "mask subdirectory", [](const RunConfig& c) { return c.data.mask_dir; },
        [](RunConfig& c, const std::string& v) { c.data.mask_dir = v; });

    add("eval.emeasure", "E-measure binarization: adaptive | mean",
        [](const RunConfig& c) { return metrics::to_string(c.emeasure); },
        [](RunConfig& c, const std::string& v) {
            try {
                c.emeasure = metrics::parse_emeasure_mode(trim(v));
            } catch (const ContractError& e) {
                throw ConfigError(e.what());
            }
        });
    return k;
}

bool is_bare_value(const std::string& v) {
    if (v == "true" || v == "false") return true;
    if (!v.empty() && v.front() == '[') return true;
    double d;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    return !v.empty() && ec == std::errc() && ptr == v.data() + v.size();
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = build_keys();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : config_keys())
        if (k.key == key) {
            k.set(cfg, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set_config_value(cfg, trim(assignment.substr(0, eq)), unquote(trim(assignment.substr(eq + 1))));
}

ConfigEntries config_entries(const RunConfig& cfg, const std::string& prefix) {
    ConfigEntries out;
    for (const auto& k : config_keys())
        if (k.key.rfind(prefix, 0) == 0) out.emplace_back(k.key, k.get(cfg));
    return out;
}

void apply_entries(RunConfig& cfg, const ConfigEntries& entries) {
    for (const auto& [key, value] : entries) set_config_value(cfg, key, value);
}

ConfigEntries parse_config_text(const std::string& text) {
    ConfigEntries out;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
        const std::string name = trim(t.substr(0, eq));
        const std::string key = section.empty() ? name : section + "." + name;
        if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
        out.emplace_back(key, unquote(trim(t.substr(eq + 1))));
    }
    return out;
}

std::string format_config_text(const ConfigEntries& entries) {
    std::string out, section;
    for (const auto& [key, value] : entries) {
        const auto dot = key.find('.');
        const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
        const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
        if (sec != section) {
            if (!out.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += name + " = " + (is_bare_value(value) ? value : "\"" + value + "\"") + '\n';
    }
    return out;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig cfg;
    apply_entries(cfg, parse_config_text(ss.str()));
    return cfg;
}

void write_config_file(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << format_config_text(config_entries(cfg));
}

std::string describe_config_keys() {
    const RunConfig defaults;
    std::string out;
    for (const auto& k : config_keys()) {
        std::string line = "  " + k.key;
        line.resize(std::max<std::size_t>(line.size() + 1, 26), ' ');
        const std::string def = k.get(defaults);
        out += line + k.doc + " [default: " + (def.empty() ? "\"\"" : def) + "]\n";
    }
    return out;
}

}  // namespace sodkit
