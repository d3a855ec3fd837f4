#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sbevloc/bev.hpp"
#include "sbevloc/errors.hpp"
#include "sbevloc/fast.hpp"
#include "sbevloc/format.hpp"
#include "sbevloc/localization.hpp"
#include "sbevloc/loss.hpp"
#include "sbevloc/metrics.hpp"
#include "sbevloc/model.hpp"
#include "sbevloc/optimizer.hpp"
#include "sbevloc/triplet.hpp"

namespace sbevloc {

struct ConfigKey {
    const char* key;
    const char* default_value;
    const char* help;
};

/// Every tunable has a named key; unknown keys are rejected up front.
inline const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"world.seed", "7", "synthetic world seed"},
        {"world.extent", "40", "world half-extent (m)"},
        {"world.walls", "40", "number of wall segments"},
        {"world.poles", "80", "number of poles"},
        {"scan.range", "30", "max ray range (m)"},
        {"scan.rays", "720", "rays per revolution (angular_res = 2*pi/rays)"},
        {"scan.noise_sigma", "0.02", "range noise sigma (m)"},
        {"scan.seed", "100", "base seed for per-scan ray noise"},
        {"synth.scans", "300", "trajectory scan count"},
        {"synth.radius", "25", "loop trajectory radius (m)"},
        {"synth.loops", "1.25", "loop turns; >1 revisits the lap start"},
        {"synth.queries", "50", "held-out query scan count"},
        {"synth.query_min_offset", "0.5", "min query displacement from the trajectory (m)"},
        {"synth.query_max_offset", "2.5", "max query displacement from the trajectory (m)"},
        {"synth.query_seed", "4242", "query pose sampling seed"},
        {"bev.extent", "40", "BEV half-extent (m)"},
        {"bev.voxel", "0.4", "BEV voxel / pixel size (m)"},
        {"bev.saturation", "8", "cell count at which intensity saturates"},
        {"bev.zmin", "-3", "z crop lower bound (m)"},
        {"bev.zmax", "8", "z crop upper bound (m)"},
        {"fast.threshold", "0.08", "FAST contrast threshold"},
        {"fast.arc", "9", "FAST contiguous arc length (9..12)"},
        {"fast.nms_radius", "3", "FAST suppression radius (px, Chebyshev)"},
        {"fast.max_keypoints", "500", "keypoint cap after NMS"},
        {"triplet.dth", "5", "position threshold D_TH (m)"},
        {"triplet.m", "10", "negatives per triplet"},
        {"triplet.r", "200", "patch size (px)"},
        {"triplet.strategy", "fast", "candidate strategy: fast|random|longitudinal"},
        {"triplet.augment", "rotate", "augmentation: none|rotate|rotate_flip"},
        {"model.channels", "8,16,16", "conv stack widths (comma list)"},
        {"model.kernel", "3", "conv kernel size (odd)"},
        {"model.rotations", "8", "REM rotation count"},
        {"model.clusters", "64", "NetVLAD cluster count"},
        {"model.seed", "1", "parameter initialization seed"},
        {"loss.kind", "softcos", "loss: softcos|softcos_l2|lazy_triplet"},
        {"loss.tau", "0.1", "softplus temperature"},
        {"loss.margin", "0.3", "lazy triplet margin"},
        {"train.lr", "0.0001", "AdamW learning rate"},
        {"train.epochs", "50", "training epochs"},
        {"train.batch", "4", "triplets per optimizer step"},
        {"train.weight_decay", "0.01", "decoupled weight decay"},
        {"train.beta1", "0.9", "Adam beta1"},
        {"train.beta2", "0.999", "Adam beta2"},
        {"train.eps", "1e-08", "Adam epsilon"},
        {"train.clip", "10", "global gradient norm clip (<=0 disables)"},
        {"train.seed", "0", "training shuffle / mining seed"},
        {"db.spacing", "1", "keyframe spacing (m of travel)"},
        {"loc.ransac_threshold", "2", "RANSAC inlier radius (px)"},
        {"loc.ransac_iters", "500", "RANSAC iterations"},
        {"loc.ransac_seed", "0", "RANSAC sampling seed"},
        {"loc.min_consensus", "4", "minimum inlier count"},
        {"loc.ratio", "0", "feature match ratio test (0 disables)"},
        {"eval.positive_radius", "5", "true-positive radius (m)"},
        {"eval.success_trans", "2", "localization success translation gate (m)"},
        {"eval.success_rot", "5", "localization success rotation gate (deg)"},
        {"eval.exclusion_window", "100", "loop closure: recent frames excluded"},
        {"eval.query_index", "0", "ambiguity profile query frame"},
    };
    return keys;
}

/// Flat `section.key = value` configuration, '#' comments, UTF-8.
class Config {
public:
    Config() {
        for (const ConfigKey& k : config_registry()) values_[k.key] = k.default_value;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        it->second = value;
    }

    /// Parses "key = value" or "key=value" assignments, one per line.
    void parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = strip_comment(line);
            if (s.empty()) continue;
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key or value");
            set(key, value);
        }
    }

    /// "key=value" command-line override.
    void apply_override(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must be key=value: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    const std::string& get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        return it->second;
    }

    double get_double(const std::string& key) const {
        const std::string& s = get_string(key);
        try {
            std::size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not a number: " + s);
        }
    }

    long long get_int(const std::string& key) const {
        const std::string& s = get_string(key);
        try {
            std::size_t pos = 0;
            long long v = std::stoll(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not an integer: " + s);
        }
    }

    std::uint64_t get_seed(const std::string& key) const {
        return static_cast<std::uint64_t>(get_int(key));
    }

    std::vector<int> get_int_list(const std::string& key) const {
        const std::string& s = get_string(key);
        std::vector<int> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(std::stoi(trim(item)));
            } catch (const std::exception&) {
                throw ConfigError("config key " + key + " has a bad list entry: " + item);
            }
        }
        if (out.empty()) throw ConfigError("config key " + key + " is an empty list");
        return out;
    }

    /// Deterministic full dump, the reproducibility snapshot for each run.
    std::string snapshot() const {
        std::string out = "# resolved configuration\n";
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    // Typed section builders.
    BevConfig bev() const {
        BevConfig c;
        c.extent = get_double("bev.extent");
        c.voxel = get_double("bev.voxel");
        c.saturation_count = static_cast<int>(get_int("bev.saturation"));
        c.z_min = get_double("bev.zmin");
        c.z_max = get_double("bev.zmax");
        c.validate();
        return c;
    }

    FastConfig fast() const {
        FastConfig c;
        c.threshold = get_double("fast.threshold");
        c.arc = static_cast<int>(get_int("fast.arc"));
        c.nms_radius = static_cast<int>(get_int("fast.nms_radius"));
        c.max_keypoints = static_cast<int>(get_int("fast.max_keypoints"));
        return c;
    }

    TripletConfig triplet() const {
        TripletConfig c;
        c.d_th = get_double("triplet.dth");
        c.m_negatives = static_cast<int>(get_int("triplet.m"));
        c.patch_size = static_cast<int>(get_int("triplet.r"));
        c.strategy = parse_strategy(get_string("triplet.strategy"));
        c.augment = parse_augmentation(get_string("triplet.augment"));
        c.fast = fast();
        c.validate();
        return c;
    }

    ModelConfig model() const {
        ModelConfig c;
        c.conv_channels = get_int_list("model.channels");
        c.kernel = static_cast<int>(get_int("model.kernel"));
        c.rotations = static_cast<int>(get_int("model.rotations"));
        c.clusters = static_cast<int>(get_int("model.clusters"));
        c.validate();
        return c;
    }

    LossConfig loss() const {
        LossConfig c;
        c.kind = parse_loss_kind(get_string("loss.kind"));
        c.tau = get_double("loss.tau");
        c.margin = get_double("loss.margin");
        c.validate();
        return c;
    }

    TrainConfig train(int workers, bool dry_run) const {
        TrainConfig c;
        c.learning_rate = get_double("train.lr");
        c.epochs = static_cast<int>(get_int("train.epochs"));
        c.batch_size = static_cast<int>(get_int("train.batch"));
        c.weight_decay = get_double("train.weight_decay");
        c.beta1 = get_double("train.beta1");
        c.beta2 = get_double("train.beta2");
        c.eps = get_double("train.eps");
        c.clip_norm = get_double("train.clip");
        c.seed = get_seed("train.seed");
        c.workers = workers;
        c.dry_run = dry_run;
        c.validate();
        return c;
    }

    LocalizationConfig localization() const {
        LocalizationConfig c;
        c.keyframe_spacing = get_double("db.spacing");
        c.ransac_threshold = get_double("loc.ransac_threshold");
        c.ransac_iters = static_cast<int>(get_int("loc.ransac_iters"));
        c.ransac_seed = get_seed("loc.ransac_seed");
        c.min_consensus = static_cast<int>(get_int("loc.min_consensus"));
        c.ratio_test = get_double("loc.ratio");
        c.fast = fast();
        c.validate();
        return c;
    }

    EvalConfig eval() const {
        EvalConfig c;
        c.positive_radius = get_double("eval.positive_radius");
        c.loc_success_trans = get_double("eval.success_trans");
        c.loc_success_rot = get_double("eval.success_rot");
        c.exclusion_window = static_cast<int>(get_int("eval.exclusion_window"));
        c.validate();
        return c;
    }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }
    static std::string strip_comment(const std::string& s) {
        auto h = s.find('#');
        return trim(h == std::string::npos ? s : s.substr(0, h));
    }

    std::map<std::string, std::string> values_;  // ordered for stable snapshots
};

}  // namespace sbevloc
