#include "voxsyn/runconfig.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

extern char** environ;

namespace voxsyn::runconfig {

json defaults() {
    json j;
    j["seed"] = 17;
    j["tabular"] = {{"strict_csv", true}};
    j["encoder"] = {{"id", "stub-768"},       {"backend", "deterministic-stub"},
                    {"dimension", 768},       {"max_tokens", 128},
                    {"cache_dir", ""},        {"weights_path", ""}};
    j["data"] = {{"mask_classes", 4},
                 {"window_lo", -1000.0},
                 {"window_hi", 400.0},
                 {"crop", {64, 256, 256}},
                 {"min_lung_fraction", 0.01},
                 {"max_attempts", 20}};
    j["fusion"] = {{"kind", ""},       {"levels", json::array()}, {"key_dim", 0},
                   {"mlp_hidden", 0},  {"residual", true}};
    j["diffusion"] = {{"T", 250}, {"beta_schedule", "linear"}, {"sigma_mode", "beta"}};
    j["train"] = {{"backbone", "pix2pix"},
                  {"use_text", false},
                  {"lr", 0.0},  // 0 = backbone default (1e-4 pix2pix/unet, 1e-5 ddpm)
                  {"batch_size", 2},
                  {"epochs", 1800},
                  {"decay_start_epoch", 800},
                  {"base_channels", 32},
                  {"depth_levels", 4},
                  {"gn_groups", 8},
                  {"adv_weight", 1.0},
                  {"l1_weight", 100.0},
                  {"disc_base", 64},
                  {"disc_layers", 3},
                  {"checkpoint_every", 0}};
    j["eval"] = {{"crops_per_subject", 5}, {"kid_subsets", 100},    {"kid_subset_size", 0},
                 {"is_folds", 10},         {"extractor", "stats"},  {"extractor_weights", ""}};
    j["analyze"] = {{"slice", "mid"}};
    return j;
}

json preset_overlay(const std::string& name) {
    if (name == "full") return json::object();  // defaults are the full scale
    if (name == "desk") {
        json j;
        j["encoder"] = {{"dimension", 64}};
        j["data"] = {{"crop", {8, 8, 8}}, {"max_attempts", 8}};
        j["diffusion"] = {{"T", 50}};
        j["train"] = {{"lr", 2e-3},        {"epochs", 20},     {"decay_start_epoch", 10},
                      {"base_channels", 8}, {"depth_levels", 2}, {"gn_groups", 4},
                      {"disc_base", 8},     {"disc_layers", 1}};
        j["eval"] = {{"kid_subsets", 10}};
        return j;
    }
    throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
}

void merge_validated(json& base, const json& overlay, const std::string& path) {
    if (!overlay.is_object())
        throw ConfigError("config node '" + (path.empty() ? "<root>" : path) +
                          "' must be an object");
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key_path);
        if (base[it.key()].is_object() && !base[it.key()].empty()) {
            merge_validated(base[it.key()], it.value(), key_path);
        } else {
            base[it.key()] = it.value();
        }
    }
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
}

namespace {

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);  // plain string
    }
}

}  // namespace

void apply_environment(json& cfg, const char* prefix) {
    const std::string pfx(prefix);
    for (char** e = environ; *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind(pfx, 0) != 0) continue;
        const size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(pfx.size(), eq - pfx.size());
        const std::string value = entry.substr(eq + 1);
        for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        // SECTION_KEY -> section.key; nested keys keep their own underscores,
        // so match against the known tree greedily
        const size_t us = key.find('_');
        json overlay;
        if (us == std::string::npos) {
            overlay[key] = parse_scalar(value);
        } else {
            overlay[key.substr(0, us)][key.substr(us + 1)] = parse_scalar(value);
        }
        merge_validated(cfg, overlay, "");
    }
}

void apply_set_pair(json& cfg, const std::string& pair) {
    const size_t eq = pair.find('=');
    if (eq == std::string::npos)
        throw ConfigError("--set expects key.path=value, got '" + pair + "'");
    const std::string path = pair.substr(0, eq);
    const json value = parse_scalar(pair.substr(eq + 1));
    json* node = &cfg;
    size_t start = 0;
    std::string walked;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        walked = walked.empty() ? key : walked + "." + key;
        if (!node->contains(key)) throw ConfigError("unknown config key: " + walked);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

void write_echo(const json& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json echo = cfg;
    echo["voxsyn_version"] = kVersion;
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write config echo: " + (dir / "config.json").string());
    out << echo.dump(2) << "\n";
}

training::TrainConfig train_config(const json& cfg) {
    training::TrainConfig t;
    const json& tr = cfg.at("train");
    t.backbone = training::backbone_from_name(tr.at("backbone").get<std::string>());
    t.use_text = tr.at("use_text").get<bool>();
    t.lr = tr.at("lr").get<double>();
    if (t.lr == 0.0) t.lr = t.backbone == training::BackboneKind::Ddpm ? 1e-5 : 1e-4;
    t.batch_size = tr.at("batch_size").get<Index>();
    t.epochs = tr.at("epochs").get<long>();
    t.decay_start_epoch = tr.at("decay_start_epoch").get<long>();
    t.seed = cfg.at("seed").get<std::uint64_t>();
    t.mask_classes = cfg.at("data").at("mask_classes").get<Index>();
    t.base_channels = tr.at("base_channels").get<Index>();
    t.depth_levels = tr.at("depth_levels").get<Index>();
    t.gn_groups = tr.at("gn_groups").get<Index>();
    t.crop = crop_spec(cfg);
    t.adv_weight = tr.at("adv_weight").get<double>();
    t.l1_weight = tr.at("l1_weight").get<double>();
    t.disc_base = tr.at("disc_base").get<Index>();
    t.disc_layers = tr.at("disc_layers").get<Index>();
    t.timesteps = cfg.at("diffusion").at("T").get<long>();
    t.beta_schedule = cfg.at("diffusion").at("beta_schedule").get<std::string>();
    t.sigma_mode = cfg.at("diffusion").at("sigma_mode").get<std::string>();
    t.fusion_kind = cfg.at("fusion").at("kind").get<std::string>();
    t.fusion_levels = cfg.at("fusion").at("levels").get<std::vector<Index>>();
    t.fusion_key_dim = cfg.at("fusion").at("key_dim").get<Index>();
    t.fusion_mlp_hidden = cfg.at("fusion").at("mlp_hidden").get<Index>();
    t.fusion_residual = cfg.at("fusion").at("residual").get<bool>();
    t.checkpoint_every = tr.at("checkpoint_every").get<long>();
    return t;
}

crops::CropSpec crop_spec(const json& cfg) {
    crops::CropSpec s;
    const auto& d = cfg.at("data");
    const auto& c = d.at("crop");
    if (!c.is_array() || c.size() != 3) throw ConfigError("data.crop must be [z, y, x]");
    for (int i = 0; i < 3; ++i) s.size[static_cast<size_t>(i)] = c[i].get<Index>();
    s.max_attempts = d.at("max_attempts").get<int>();
    const double frac = d.at("min_lung_fraction").get<double>();
    if (frac > 0.0) {
        const double voxels = static_cast<double>(s.size[0] * s.size[1] * s.size[2]);
        crops::ClassGroupMin g;
        g.classes = {1, 2};  // right and left lung
        g.min_voxels = static_cast<long>(std::ceil(frac * voxels));
        s.min_group_voxels.push_back(g);
    }
    return s;
}

volume::NormalizationWindow window(const json& cfg) {
    volume::NormalizationWindow w;
    w.lo = cfg.at("data").at("window_lo").get<double>();
    w.hi = cfg.at("data").at("window_hi").get<double>();
    return w;
}

embedding::EncoderConfig encoder_config(const json& cfg) {
    embedding::EncoderConfig e;
    const auto& j = cfg.at("encoder");
    e.encoder_id = j.at("id").get<std::string>();
    e.backend = embedding::backend_from_name(j.at("backend").get<std::string>());
    e.dimension = j.at("dimension").get<Index>();
    e.max_tokens = j.at("max_tokens").get<long>();
    const std::string cache = j.at("cache_dir").get<std::string>();
    if (!cache.empty()) e.cache_dir = cache;
    const std::string weights = j.at("weights_path").get<std::string>();
    if (!weights.empty()) e.weights_path = weights;
    return e;
}

evaluation::EvalProtocol eval_protocol(const json& cfg) {
    evaluation::EvalProtocol p;
    p.crop = crop_spec(cfg);
    const auto& e = cfg.at("eval");
    p.crops_per_subject = e.at("crops_per_subject").get<int>();
    p.seed = cfg.at("seed").get<std::uint64_t>();
    p.kid_subsets = e.at("kid_subsets").get<int>();
    p.kid_subset_size = e.at("kid_subset_size").get<Index>();
    p.is_folds = e.at("is_folds").get<int>();
    return p;
}

}  // namespace voxsyn::runconfig
