#include "hsnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hsnet {
namespace {

using nlohmann::json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<T, Index> || std::is_same_v<T, std::uint64_t>) {
                if (!it->is_number_integer()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError("");
            }
            if constexpr (std::is_same_v<T, std::uint64_t>) {
                if (it->is_number_unsigned()) {
                    out = it->template get<std::uint64_t>();
                } else {
                    const auto v = it->template get<std::int64_t>();
                    if (v < 0) throw ConfigError("");
                    out = static_cast<std::uint64_t>(v);
                }
            } else {
                out = it->template get<T>();
            }
        } catch (const std::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type or value");
        }
    }

    const json* find(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    bool has(const char* key) const { return j_.contains(key); }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(where_ + ": unknown key \"" + item.key() + "\"");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::array<Index, 4> index4(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4) throw ConfigError(where + ": expected an array of 4 integers");
    std::array<Index, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!j[i].is_number_integer()) throw ConfigError(where + ": expected an array of 4 integers");
        out[i] = j[i].get<Index>();
    }
    return out;
}

std::array<double, 3> double3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected an array of 3 numbers");
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!j[i].is_number()) throw ConfigError(where + ": expected an array of 3 numbers");
        out[i] = j[i].get<double>();
    }
    return out;
}

template <typename Fn>
auto translate(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

NetworkConfig parse_network(const json& j) {
    Section sec(j, "network");
    std::string name = "tiny-hs";
    sec.get("preset", name);
    NetworkConfig cfg = translate("network.preset", [&] { return preset(name); });

    std::string text;
    if (sec.has("block_type")) {
        sec.get("block_type", text);
        cfg.block_type = translate("network.block_type", [&] { return parse_block_type(text); });
    } else {
        sec.find("block_type");
    }
    if (const json* v = sec.find("stage_blocks")) cfg.stage_blocks = index4(*v, "network.stage_blocks");
    sec.get("base_w", cfg.base_w);
    sec.get("s", cfg.s);
    if (const json* v = sec.find("width_rule")) {
        if (v->is_string() && v->get<std::string>() == "double-per-stage") {
            cfg.custom_widths.reset();
        } else {
            cfg.custom_widths = index4(*v, "network.width_rule");
        }
    }
    if (sec.has("stem")) {
        sec.get("stem", text);
        cfg.stem = translate("network.stem", [&] { return parse_stem(text); });
    } else {
        sec.find("stem");
    }
    sec.get("stem_channels", cfg.stem_channels);
    sec.get("stage_out_base", cfg.stage_out_base);
    if (sec.has("variant")) {
        sec.get("variant", text);
        cfg.variant = translate("network.variant", [&] { return parse_variant(text); });
    } else {
        sec.find("variant");
    }
    sec.get("kernel", cfg.kernel);
    sec.get("zero_init_residual", cfg.zero_init_residual);
    sec.get("num_classes", cfg.num_classes);
    sec.get("image_size", cfg.image_size);
    sec.finish();
    cfg.validate();
    return cfg;
}

DataConfig parse_data(const json& j) {
    Section sec(j, "data");
    DataConfig d;
    std::string kind = "synth_blobs";
    sec.get("kind", kind);
    if (kind == "synth_blobs") {
        d.kind = DataConfig::Kind::synth_blobs;
    } else if (kind == "cifar10") {
        d.kind = DataConfig::Kind::cifar10;
    } else {
        throw ConfigError("data.kind: expected \"synth_blobs\" or \"cifar10\", got \"" + kind + "\"");
    }
    sec.get("classes", d.classes);
    sec.get("per_class", d.per_class);
    sec.get("eval_per_class", d.eval_per_class);
    std::string path;
    sec.get("path", path);
    d.path = path;
    if (sec.has("train_limit")) {
        Index v = 0;
        sec.get("train_limit", v);
        d.train_limit = v;
    } else {
        sec.find("train_limit");
    }
    if (sec.has("eval_limit")) {
        Index v = 0;
        sec.get("eval_limit", v);
        d.eval_limit = v;
    } else {
        sec.find("eval_limit");
    }
    sec.finish();
    if (d.classes < 2) throw ConfigError("data.classes must be >= 2");
    if (d.per_class < 1 || d.eval_per_class < 1) throw ConfigError("data.per_class and eval_per_class must be >= 1");
    if (d.kind == DataConfig::Kind::cifar10 && d.path.empty()) throw ConfigError("data.path is required for cifar10");
    if ((d.train_limit && *d.train_limit < 1) || (d.eval_limit && *d.eval_limit < 1)) {
        throw ConfigError("data limits must be >= 1");
    }
    return d;
}

TrainConfig parse_train(const json& j) {
    Section sec(j, "train");
    TrainConfig t;
    sec.get("epochs", t.epochs);
    sec.get("batch_size", t.batch_size);
    sec.get("eval_batch_size", t.eval_batch_size);
    sec.get("base_lr", t.base_lr);
    sec.get("momentum", t.momentum);
    sec.get("weight_decay", t.weight_decay);
    sec.get("decay_all", t.decay_all);
    sec.get("label_smoothing", t.label_smoothing);
    sec.get("mixup_alpha", t.mixup_alpha);
    sec.get("augment_pad", t.augment_pad);
    sec.get("flip_prob", t.flip_prob);
    if (const json* v = sec.find("normalize_mean")) t.normalization.mean = double3(*v, "train.normalize_mean");
    if (const json* v = sec.find("normalize_std")) t.normalization.std = double3(*v, "train.normalize_std");
    sec.finish();
    if (t.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (t.batch_size < 1 || t.eval_batch_size < 1) throw ConfigError("train batch sizes must be >= 1");
    if (!(t.base_lr > 0.0)) throw ConfigError("train.base_lr must be > 0");
    if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (!(t.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(t.label_smoothing >= 0.0 && t.label_smoothing < 1.0)) {
        throw ConfigError("train.label_smoothing must lie in [0, 1)");
    }
    if (!(t.mixup_alpha >= 0.0)) throw ConfigError("train.mixup_alpha must be >= 0");
    if (t.augment_pad < 0) throw ConfigError("train.augment_pad must be >= 0");
    if (!(t.flip_prob >= 0.0 && t.flip_prob <= 1.0)) throw ConfigError("train.flip_prob must lie in [0, 1]");
    for (double s : t.normalization.std) {
        if (!(s > 0.0)) throw ConfigError("train.normalize_std entries must be > 0");
    }
    return t;
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
}

RunConfig parse_root(const json& j) {
    Section sec(j, "config");
    const json* version = sec.find("version");
    if (!version) throw ConfigError("config: missing \"version\"");
    if (!version->is_number_integer() || version->get<int>() != RunConfig::kVersion) {
        throw ConfigError("config: unsupported version " + version->dump() + " (expected " +
                          std::to_string(RunConfig::kVersion) + ")");
    }
    RunConfig c;
    sec.get("seed", c.seed);
    std::string precision = "float32";
    sec.get("precision", precision);
    if (precision == "float32") {
        c.precision = Precision::float32;
    } else if (precision == "float64") {
        c.precision = Precision::float64;
    } else {
        throw ConfigError("config.precision: expected \"float32\" or \"float64\"");
    }
    c.network = parse_network(sec.find("network") ? *sec.find("network") : json::object());
    c.data = parse_data(sec.find("data") ? *sec.find("data") : json::object());
    c.train = parse_train(sec.find("train") ? *sec.find("train") : json::object());
    sec.finish();
    if (c.data.kind == DataConfig::Kind::synth_blobs && c.data.classes != c.network.num_classes) {
        throw ConfigError("data.classes (" + std::to_string(c.data.classes) + ") differs from network.num_classes (" +
                          std::to_string(c.network.num_classes) + ")");
    }
    if (c.data.kind == DataConfig::Kind::cifar10 &&
        (c.network.num_classes != 10 || c.network.image_size != kCifarSide)) {
        throw ConfigError("cifar10 needs network.num_classes = 10 and network.image_size = 32");
    }
    return c;
}

std::string read_text(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open config " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

RunConfig parse_run_config(const std::string& text) { return parse_root(parse_json(text)); }

RunConfig load_run_config(const std::filesystem::path& file) { return parse_run_config(read_text(file)); }

NetworkConfig load_network_config(const std::filesystem::path& file) {
    return load_run_config(file).network;
}

std::string to_json_text(const RunConfig& c) {
    const auto& n = c.network;
    json net = {{"block_type", std::string(to_string(n.block_type))},
                {"stage_blocks", n.stage_blocks},
                {"base_w", n.base_w},
                {"s", n.s},
                {"stem", std::string(to_string(n.stem))},
                {"stem_channels", n.stem_channels},
                {"stage_out_base", n.stage_out_base},
                {"variant", std::string(to_string(n.variant))},
                {"kernel", n.kernel},
                {"zero_init_residual", n.zero_init_residual},
                {"num_classes", n.num_classes},
                {"image_size", n.image_size}};
    if (n.custom_widths) {
        net["width_rule"] = *n.custom_widths;
    } else {
        net["width_rule"] = "double-per-stage";
    }
    json data = {{"kind", c.data.kind == DataConfig::Kind::synth_blobs ? "synth_blobs" : "cifar10"},
                 {"classes", c.data.classes},
                 {"per_class", c.data.per_class},
                 {"eval_per_class", c.data.eval_per_class},
                 {"path", c.data.path.string()}};
    if (c.data.train_limit) data["train_limit"] = *c.data.train_limit;
    if (c.data.eval_limit) data["eval_limit"] = *c.data.eval_limit;
    const auto& t = c.train;
    json train = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"eval_batch_size", t.eval_batch_size},
                  {"base_lr", t.base_lr},
                  {"momentum", t.momentum},
                  {"weight_decay", t.weight_decay},
                  {"decay_all", t.decay_all},
                  {"label_smoothing", t.label_smoothing},
                  {"mixup_alpha", t.mixup_alpha},
                  {"augment_pad", t.augment_pad},
                  {"flip_prob", t.flip_prob},
                  {"normalize_mean", t.normalization.mean},
                  {"normalize_std", t.normalization.std}};
    json root = {{"version", RunConfig::kVersion},
                 {"seed", c.seed},
                 {"precision", c.precision == Precision::float32 ? "float32" : "float64"},
                 {"network", net},
                 {"data", data},
                 {"train", train}};
    return root.dump(2) + "\n";
}

}  // namespace hsnet
