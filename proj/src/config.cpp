#include "gpcd/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpcd/errors.hpp"

namespace gpcd {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as " + expected);
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    bad_value(key, value, "an integer");
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used == value.size() && value[0] != '-') return v;
    } catch (const std::exception&) {
    }
    bad_value(key, value, "an unsigned integer");
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    bad_value(key, value, "a number");
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "a boolean (true/false/1/0)");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    size_t start = 0;
    while (start <= value.size()) {
        const size_t comma = value.find(',', start);
        const std::string item =
            trim(value.substr(start, comma == std::string::npos ? comma : comma - start));
        if (!item.empty()) out.push_back(parse_int(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

struct SchemaEntry {
    const char* key;
    const char* desc;
    void (*set)(ExperimentConfig&, const std::string&);
    std::string (*show)(const ExperimentConfig&);
};

const SchemaEntry kSchema[] = {
    {"noise.kind", "noise model for add-noise",
     [](ExperimentConfig& c, const std::string& v) { c.noise.kind = parse_noise_kind(v); },
     [](const ExperimentConfig& c) { return noise_kind_name(c.noise.kind); }},
    {"noise.scale", "noise scale as a fraction of the bounding radius",
     [](ExperimentConfig& c, const std::string& v) {
         c.noise.scale = parse_double("noise.scale", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.noise.scale); }},
    {"noise.seed", "noise RNG seed",
     [](ExperimentConfig& c, const std::string& v) {
         c.noise.seed = parse_u64("noise.seed", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.noise.seed); }},
    {"denoise.T", "gradient-ascent iterations",
     [](ExperimentConfig& c, const std::string& v) {
         c.schedule.T = parse_int("denoise.T", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.schedule.T); }},
    {"denoise.s0", "initial step size",
     [](ExperimentConfig& c, const std::string& v) {
         c.schedule.s0 = parse_double("denoise.s0", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.schedule.s0); }},
    {"denoise.gamma", "per-iteration step decay",
     [](ExperimentConfig& c, const std::string& v) {
         c.schedule.gamma = parse_double("denoise.gamma", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.schedule.gamma); }},
    {"denoise.t_act", "first iteration with uniformity refinement",
     [](ExperimentConfig& c, const std::string& v) {
         c.schedule.t_act = parse_int("denoise.t_act", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.schedule.t_act); }},
    {"denoise.scale_uninet", "multiply the refinement displacement by s_t",
     [](ExperimentConfig& c, const std::string& v) {
         c.schedule.scale_uninet = parse_bool("denoise.scale_uninet", v);
     },
     [](const ExperimentConfig& c) {
         return std::string(c.schedule.scale_uninet ? "true" : "false");
     }},
    {"denoise.patch_size", "points per inference patch",
     [](ExperimentConfig& c, const std::string& v) {
         c.denoise_patch_size = parse_int("denoise.patch_size", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.denoise_patch_size); }},
    {"denoise.coverage", "patch count multiplier over n/patch_size",
     [](ExperimentConfig& c, const std::string& v) {
         c.denoise_coverage = parse_double("denoise.coverage", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.denoise_coverage); }},
    {"model.k_feat", "neighbors in feature extraction and gradient head",
     [](ExperimentConfig& c, const std::string& v) {
         c.k_feat = parse_int("model.k_feat", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.k_feat); }},
    {"model.k_uninet", "neighbors in the refinement graph",
     [](ExperimentConfig& c, const std::string& v) {
         c.k_uninet = parse_int("model.k_uninet", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.k_uninet); }},
    {"model.l_uninet", "refinement edge-conv layers",
     [](ExperimentConfig& c, const std::string& v) {
         c.l_uninet = parse_int("model.l_uninet", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.l_uninet); }},
    {"train.epochs", "training epochs",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.epochs = parse_int("train.epochs", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.epochs); }},
    {"train.lr0", "initial Adam learning rate",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.lr0 = parse_double("train.lr0", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.lr0); }},
    {"train.lr_milestones", "epochs after which the lr decays (comma separated)",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.lr_milestones = parse_int_list("train.lr_milestones", v);
     },
     [](const ExperimentConfig& c) { return fmt_int_list(c.train.lr_milestones); }},
    {"train.lr_decay", "lr multiplier at each milestone",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.lr_decay = parse_double("train.lr_decay", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.lr_decay); }},
    {"train.batch", "patches per optimizer step",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.batch = parse_int("train.batch", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.batch); }},
    {"train.steps_per_epoch", "optimizer steps per epoch",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.steps_per_epoch = parse_int("train.steps_per_epoch", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.steps_per_epoch); }},
    {"train.patch_size", "points per training patch",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.patch_size = parse_int("train.patch_size", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.patch_size); }},
    {"train.noise_min", "training noise std lower bound",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.noise_min = parse_double("train.noise_min", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.noise_min); }},
    {"train.noise_max", "training noise std upper bound",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.noise_max = parse_double("train.noise_max", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.noise_max); }},
    {"train.scale_min", "augmentation scale lower bound",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.scale_min = parse_double("train.scale_min", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.scale_min); }},
    {"train.scale_max", "augmentation scale upper bound",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.scale_max = parse_double("train.scale_max", v);
     },
     [](const ExperimentConfig& c) { return fmt_double(c.train.scale_max); }},
    {"train.k_target", "clean neighbors averaged into the score target",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.k_target = parse_int("train.k_target", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.k_target); }},
    {"train.pool", "precomputed rollouts for the refinement stage",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.pool = parse_int("train.pool", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.pool); }},
    {"train.val_pairs", "validation pairs sampled from held-out clouds",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.val_pairs = parse_int("train.val_pairs", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.val_pairs); }},
    {"train.seed", "training RNG seed",
     [](ExperimentConfig& c, const std::string& v) {
         c.train.seed = parse_u64("train.seed", v);
     },
     [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
};

}  // namespace

void ExperimentConfig::validate() const {
    schedule.validate();
    train.validate();
    if (!(noise.scale > 0.0)) throw std::invalid_argument("config: noise.scale must be positive");
    if (denoise_patch_size < 2)
        throw std::invalid_argument("config: denoise.patch_size must be >= 2");
    if (!(denoise_coverage >= 1.0))
        throw std::invalid_argument("config: denoise.coverage must be >= 1");
    if (k_feat < 1 || k_uninet < 1 || l_uninet < 1)
        throw std::invalid_argument("config: model sizes must be positive");
    if (denoise_patch_size < k_feat + 1 || denoise_patch_size < k_uninet + 1)
        throw std::invalid_argument("config: denoise.patch_size must exceed model.k_feat and model.k_uninet");
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
    for (const auto& entry : kSchema) {
        if (key == entry.key) {
            entry.set(cfg, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
        try {
            apply_config_entry(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " +
                                        e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    return parse_config(in, path);
}

std::string config_help() {
    const ExperimentConfig defaults;
    std::ostringstream out;
    out << "config keys (key = value per line, '#' comments):\n";
    for (const auto& entry : kSchema)
        out << "  " << entry.key << " = " << entry.show(defaults) << "\n      " << entry.desc
            << "\n";
    return out.str();
}

}  // namespace gpcd
