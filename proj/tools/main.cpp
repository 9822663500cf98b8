#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxsyn/analysis.hpp"
#include "voxsyn/csvio.hpp"
#include "voxsyn/evaluate.hpp"
#include "voxsyn/nifti.hpp"
#include "voxsyn/phantom.hpp"
#include "voxsyn/runconfig.hpp"
#include "voxsyn/tabular.hpp"

// voxsyn: mask- and clinical-text-conditioned volumetric synthesis.
// Exit codes: 0 success, 2 user/config error, 3 runtime numerical failure.

namespace {

using namespace voxsyn;
namespace fs = std::filesystem;
using runconfig::json;

struct GlobalArgs {
    std::string config_file;
    std::string preset;
    std::vector<std::string> sets;
    long seed = -1;
};

json build_config(const GlobalArgs& g) {
    json cfg = runconfig::defaults();
    if (!g.preset.empty()) runconfig::merge_validated(cfg, runconfig::preset_overlay(g.preset));
    if (!g.config_file.empty())
        runconfig::merge_validated(cfg, runconfig::load_config_file(g.config_file));
    runconfig::apply_environment(cfg);
    for (const auto& s : g.sets) runconfig::apply_set_pair(cfg, s);
    if (g.seed >= 0) cfg["seed"] = g.seed;
    return cfg;
}

tabular::Schema schema_from(const std::string& path) {
    return path.empty() ? tabular::default_schema() : tabular::load_schema(path);
}

int cmd_convert(const json& cfg, const std::string& csv, const std::string& schema_path,
                const std::string& out_texts, const std::string& out_manifest, bool lenient) {
    tabular::Schema schema = schema_from(schema_path);
    const bool strict = cfg.at("tabular").at("strict_csv").get<bool>() && !lenient;
    auto records = tabular::records_from_csv(csv, schema, strict);
    std::vector<tabular::ClinicalRecord> validated;
    validated.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        try {
            validated.push_back(tabular::validate_record(records[i], schema));
        } catch (const Error& e) {
            throw ValidationError("row " + std::to_string(i) + ": " + e.what());
        }
    }
    auto texts = tabular::render_table(validated, schema);
    tabular::write_texts(texts, out_texts);
    if (!out_manifest.empty()) tabular::write_render_manifest(validated, texts, out_manifest);
    std::cout << "wrote " << texts.size() << " descriptions to " << out_texts << "\n";
    return 0;
}

int cmd_phantom(const json& cfg, const std::string& out_dir, int subjects,
                std::vector<Index> size, const std::string& container, double smoker_shift) {
    phantom::PhantomConfig pc;
    pc.subjects = subjects;
    pc.smoker_shift_hu = smoker_shift;
    if (!size.empty()) {
        if (size.size() != 3) throw ConfigError("--size expects three extents (z y x)");
        pc.size = {size[0], size[1], size[2]};
    } else {
        pc.size = runconfig::crop_spec(cfg).size;
    }
    pc.seed = cfg.at("seed").get<std::uint64_t>();
    pc.container = container;
    phantom::PhantomDataset out = phantom::generate(pc, out_dir);
    std::cout << "phantom dataset: " << out.manifest.string() << " (" << subjects
              << " subjects)\n";
    return 0;
}

std::optional<embedding::EncoderHandle> make_encoder(const json& cfg, bool needed,
                                                     const fs::path& run_dir) {
    if (!needed) return std::nullopt;
    embedding::EncoderConfig ec = runconfig::encoder_config(cfg);
    if (ec.cache_dir.empty() && !run_dir.empty()) ec.cache_dir = run_dir / "embedding_cache";
    return embedding::EncoderHandle(ec);
}

int cmd_train(const json& cfg, const std::string& manifest, const std::string& csv,
              const std::string& schema_path, const std::string& out_dir) {
    training::TrainConfig tc = runconfig::train_config(cfg);
    if (tc.use_text && csv.empty())
        throw ConfigError("train --use-text needs --csv with clinical records");
    tabular::Schema schema = schema_from(schema_path);
    dataset::Dataset ds = dataset::load_dataset(manifest, tc.use_text ? csv : "", schema,
                                                tc.mask_classes, runconfig::window(cfg));
    auto encoder = make_encoder(cfg, tc.use_text, out_dir);
    runconfig::write_echo(cfg, out_dir);
    training::TrainResult r =
        training::train_model(tc, ds, encoder ? &*encoder : nullptr, out_dir);
    std::cout << "trained " << training::backbone_name(tc.backbone)
              << (tc.use_text ? "+text" : "") << ": " << r.final_checkpoint.string()
              << " (steps " << r.steps << ", last loss " << r.last_primary_loss << ")\n";
    return 0;
}

int cmd_synthesize(const json& cfg, const std::string& checkpoint, const std::string& manifest,
                   const std::string& csv, const std::string& schema_path,
                   const std::string& out_dir, int crops_per_subject, long snapshot_every) {
    training::GeneratorBundle model = training::load_generator(checkpoint);
    tabular::Schema schema = schema_from(schema_path);
    if (model.use_text && csv.empty())
        throw ConfigError("this checkpoint is text-conditioned; provide --csv");
    dataset::Dataset ds = dataset::load_dataset(manifest, model.use_text ? csv : "", schema,
                                                model.mask_classes, runconfig::window(cfg));
    auto encoder = make_encoder(cfg, model.use_text, out_dir);
    runconfig::write_echo(cfg, out_dir);
    const crops::CropSpec spec = runconfig::crop_spec(cfg);
    const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
    for (size_t si = 0; si < ds.samples.size(); ++si) {
        const auto& sample = ds.samples[si];
        embedding::TextEmbedding emb;
        const embedding::TextEmbedding* ep = nullptr;
        if (model.use_text) {
            emb = encoder->embed(ds.texts[si].text);
            ep = &emb;
        }
        auto cs = crops::eval_crops(sample, spec, seed, crops_per_subject);
        for (size_t ci = 0; ci < cs.size(); ++ci) {
            Rng rng(derive_seed(derive_seed(seed, "synthesis"),
                                sample.subject_id + "#" + std::to_string(ci)));
            Tensor v;
            if (snapshot_every > 0 && model.kind == training::BackboneKind::Ddpm) {
                // debug snapshots of the reverse chain
                Tensor maskoh = ops::one_hot<Real>(
                    cs[ci].mask.reshaped({1, cs[ci].mask.dim(0), cs[ci].mask.dim(1),
                                          cs[ci].mask.dim(2)}),
                    model.mask_classes);
                Tensor embt;
                const Tensor* embp = nullptr;
                if (ep) {
                    embt = ep->as_tensor();
                    embp = &embt;
                }
                diffusion::SampleOptions opt;
                opt.sigma_mode = model.sigma_mode;
                opt.snapshot_every = snapshot_every;
                opt.snapshot = [&](long t, const Tensor& state) {
                    Tensor s3 = state.reshaped({state.dim(2), state.dim(3), state.dim(4)});
                    const fs::path snap =
                        fs::path(out_dir) / (sample.subject_id + "_synth" + std::to_string(ci) +
                                             "_t" + std::to_string(t) + ".nii");
                    nifti::write_volume(snap, s3, sample.spacing);
                };
                v = diffusion::sample<Real>(*model.net, maskoh, embp, model.schedule, rng,
                                            {1, 1, cs[ci].mask.dim(0), cs[ci].mask.dim(1),
                                             cs[ci].mask.dim(2)},
                                            opt);
            } else {
                v = training::synthesize_crop(model, cs[ci].mask, ep, rng);
            }
            Tensor v3 = v.reshaped({v.dim(2), v.dim(3), v.dim(4)});
            const fs::path out = fs::path(out_dir) / (sample.subject_id + "_synth" +
                                                      std::to_string(ci) + ".nii");
            nifti::write_volume(out, v3, sample.spacing);
        }
        std::cout << sample.subject_id << ": " << cs.size() << " synthetic crops\n";
    }
    return 0;
}

int cmd_evaluate(const json& cfg, const std::string& checkpoint, const std::string& manifest,
                 const std::string& csv, const std::string& schema_path, const std::string& out,
                 const std::string& append_csv, const std::string& label) {
    training::GeneratorBundle model = training::load_generator(checkpoint);
    tabular::Schema schema = schema_from(schema_path);
    if (model.use_text && csv.empty())
        throw ConfigError("this checkpoint is text-conditioned; provide --csv");
    dataset::Dataset ds = dataset::load_dataset(manifest, model.use_text ? csv : "", schema,
                                                model.mask_classes, runconfig::window(cfg));
    const fs::path out_dir = fs::path(out).parent_path();
    auto encoder = make_encoder(cfg, model.use_text, out_dir);
    if (!out_dir.empty()) runconfig::write_echo(cfg, out_dir);
    auto ex = extractor::make_extractor(cfg.at("eval").at("extractor").get<std::string>(),
                                        cfg.at("eval").at("extractor_weights").get<std::string>());
    evaluation::EvalProtocol protocol = runconfig::eval_protocol(cfg);
    evaluation::MetricReport r =
        evaluation::evaluate_model(model, ds, encoder ? &*encoder : nullptr, *ex, protocol);
    r.checkpoint = checkpoint;
    evaluation::write_report(r, out);
    if (!append_csv.empty()) {
        const std::string lbl = label.empty()
                                    ? std::string(training::backbone_name(model.kind)) +
                                          (model.use_text ? "+text" : "")
                                    : label;
        evaluation::append_report_csv(r, lbl, append_csv);
    }
    std::printf("fid %.6f  kid %.6f (%.6f)  is %.4f (%.4f)  [n_real %ld, n_fake %ld]\n", r.fid,
                r.kid_mean, r.kid_std, r.is_mean, r.is_std, r.n_real, r.n_fake);
    return 0;
}

int cmd_analyze(const json& cfg, const std::string& checkpoint, const std::string& manifest,
                const std::string& csv, const std::string& schema_path,
                const std::string& attribute, const std::string& from_value,
                const std::string& to_value, const std::string& slice_sel,
                const std::string& out_dir) {
    training::GeneratorBundle model = training::load_generator(checkpoint);
    tabular::Schema schema = schema_from(schema_path);
    dataset::Dataset ds = dataset::load_dataset(manifest, csv, schema, model.mask_classes,
                                                runconfig::window(cfg));
    auto encoder = make_encoder(cfg, true, out_dir);
    runconfig::write_echo(cfg, out_dir);
    const crops::CropSpec spec = runconfig::crop_spec(cfg);

    analysis::CounterfactualSpec cf;
    cf.attribute = attribute;
    cf.from_value = from_value;
    cf.to_value = to_value;
    cf.seed = cfg.at("seed").get<std::uint64_t>();

    csvio::Table agg;
    agg.header = {"subject", "class", "mean_delta", "mean_abs_delta", "fraction_positive"};
    for (const auto& sample : ds.samples) {
        analysis::CounterfactualResult r =
            analysis::counterfactual_pair(model, sample, cf, schema, *encoder, spec);
        analysis::DifferenceMap d = analysis::difference_map(r.vol_from, r.vol_to, r.crop.mask);
        const fs::path base = fs::path(out_dir) / sample.subject_id;
        nifti::write_volume(base.string() + "_delta.nii", d.delta, sample.spacing);
        Index slice = d.delta.dim(0) / 2;
        if (slice_sel != "mid") slice = static_cast<Index>(std::stol(slice_sel));
        analysis::render_heatmap(d, r.crop.image, slice, base.string() + "_heatmap");
        for (const auto& [cls, mean] : d.summary.class_mean) {
            const std::string cls_name =
                cls < static_cast<int>(phantom::kClassNames.size())
                    ? phantom::kClassNames[static_cast<size_t>(cls)]
                    : std::to_string(cls);
            agg.rows.push_back({sample.subject_id, cls_name, std::to_string(mean),
                                std::to_string(d.summary.mean_abs_delta),
                                std::to_string(d.summary.fraction_positive)});
        }
        agg.rows.push_back({sample.subject_id, "lung_combined",
                            std::to_string(d.summary.lung_mean),
                            std::to_string(d.summary.mean_abs_delta),
                            std::to_string(d.summary.fraction_positive)});
        agg.rows.push_back({sample.subject_id, "all", std::to_string(d.summary.mean_delta),
                            std::to_string(d.summary.mean_abs_delta),
                            std::to_string(d.summary.fraction_positive)});
        std::cout << sample.subject_id << ": lung mean delta " << d.summary.lung_mean << "\n";
    }
    csvio::write_csv(fs::path(out_dir) / "counterfactual_summary.csv", agg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxsyn: hybrid-conditioned volumetric synthesis and pattern analysis"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_file, "JSON config file merged over defaults");
    app.add_option("--preset", g.preset, "configuration preset: desk or full");
    app.add_option("--set", g.sets, "override one key, e.g. --set train.lr=1e-4");
    app.add_option("--seed", g.seed, "override the global seed");

    auto* convert = app.add_subcommand("convert", "render clinical CSV rows to text");
    std::string c_csv, c_schema, c_out, c_manifest;
    bool c_lenient = false;
    convert->add_option("--csv", c_csv, "clinical CSV with a subject_id column")->required();
    convert->add_option("--schema", c_schema, "attribute schema JSON (default: built-in)");
    convert->add_option("--out", c_out, "output text file, one description per row")->required();
    convert->add_option("--manifest", c_manifest, "sidecar JSON: subject -> rendered attributes");
    convert->add_flag("--lenient", c_lenient, "ignore unknown CSV columns");

    auto* phant = app.add_subcommand("phantom", "generate a synthetic fixture dataset");
    std::string p_out = "phantom";
    int p_subjects = 5;
    std::vector<Index> p_size;
    std::string p_container = ".nii";
    double p_shift = 180.0;
    phant->add_option("--out", p_out, "output directory");
    phant->add_option("--subjects", p_subjects, "number of subjects");
    phant->add_option("--size", p_size, "volume extents: z y x")->expected(3);
    phant->add_option("--container", p_container, "volume container: .nii or .rvol");
    phant->add_option("--smoker-shift", p_shift, "lung HU elevation for the smoker cohort");

    auto* train = app.add_subcommand("train", "train a backbone");
    std::string t_backbone, t_manifest, t_csv, t_schema, t_out = "run";
    bool t_use_text = false;
    long t_epochs = -1;
    double t_lr = -1.0;
    train->add_option("--backbone", t_backbone, "unet | pix2pix | ddpm");
    train->add_option("--manifest", t_manifest, "dataset manifest (TSV)")->required();
    train->add_option("--csv", t_csv, "clinical CSV (required with --use-text)");
    train->add_option("--schema", t_schema, "attribute schema JSON");
    train->add_option("--out", t_out, "run directory");
    train->add_flag("--use-text", t_use_text, "condition on rendered clinical text");
    train->add_option("--epochs", t_epochs,
                      "override train.epochs (decay start clamps to half when needed)");
    train->add_option("--lr", t_lr, "override train.lr");

    auto* synth = app.add_subcommand("synthesize", "synthesize crops from masks");
    std::string s_ckpt, s_manifest, s_csv, s_schema, s_out = "synth";
    int s_crops = 1;
    long s_snap = 0;
    synth->add_option("--checkpoint", s_ckpt)->required();
    synth->add_option("--manifest", s_manifest)->required();
    synth->add_option("--csv", s_csv);
    synth->add_option("--schema", s_schema);
    synth->add_option("--out", s_out);
    synth->add_option("--crops-per-subject", s_crops);
    synth->add_option("--snapshot-every", s_snap,
                      "write intermediate diffusion states every N steps");

    auto* eval = app.add_subcommand("evaluate", "patch-wise FID/KID/IS against real crops");
    std::string e_ckpt, e_manifest, e_csv, e_schema, e_out = "report.txt", e_agg, e_label;
    int e_crops = -1;
    std::string e_extractor;
    eval->add_option("--checkpoint", e_ckpt)->required();
    eval->add_option("--manifest", e_manifest)->required();
    eval->add_option("--csv", e_csv);
    eval->add_option("--schema", e_schema);
    eval->add_option("--out", e_out, "metric report file");
    eval->add_option("--csv-append", e_agg, "append a machine-readable row here");
    eval->add_option("--label", e_label, "model label for the aggregate row");
    eval->add_option("--crops-per-subject", e_crops, "override eval.crops_per_subject");
    eval->add_option("--extractor", e_extractor, "stats | slice2d");

    auto* analyze = app.add_subcommand("analyze", "counterfactual attribute perturbation");
    std::string a_ckpt, a_manifest, a_csv, a_schema, a_attr, a_from, a_to, a_slices = "mid",
                                                     a_out = "analysis";
    analyze->add_option("--checkpoint", a_ckpt)->required();
    analyze->add_option("--manifest", a_manifest)->required();
    analyze->add_option("--csv", a_csv, "clinical CSV (records provide the base text)");
    analyze->add_option("--schema", a_schema);
    analyze->add_option("--attribute", a_attr)->required();
    analyze->add_option("--from", a_from)->required();
    analyze->add_option("--to", a_to)->required();
    analyze->add_option("--slices", a_slices, "axial slice for heatmaps: mid or an index");
    analyze->add_option("--out", a_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        runconfig::json cfg = build_config(g);
        if (convert->parsed()) return cmd_convert(cfg, c_csv, c_schema, c_out, c_manifest,
                                                   c_lenient);
        if (phant->parsed())
            return cmd_phantom(cfg, p_out, p_subjects, p_size, p_container, p_shift);
        if (train->parsed()) {
            if (!t_backbone.empty()) cfg["train"]["backbone"] = t_backbone;
            if (t_use_text) cfg["train"]["use_text"] = true;
            if (t_epochs >= 0) {
                cfg["train"]["epochs"] = t_epochs;
                if (cfg["train"]["decay_start_epoch"].get<long>() >= t_epochs)
                    cfg["train"]["decay_start_epoch"] = t_epochs / 2;
            }
            if (t_lr >= 0) cfg["train"]["lr"] = t_lr;
            return cmd_train(cfg, t_manifest, t_csv, t_schema, t_out);
        }
        if (synth->parsed())
            return cmd_synthesize(cfg, s_ckpt, s_manifest, s_csv, s_schema, s_out, s_crops,
                                  s_snap);
        if (eval->parsed()) {
            if (e_crops > 0) cfg["eval"]["crops_per_subject"] = e_crops;
            if (!e_extractor.empty()) cfg["eval"]["extractor"] = e_extractor;
            return cmd_evaluate(cfg, e_ckpt, e_manifest, e_csv, e_schema, e_out, e_agg, e_label);
        }
        if (analyze->parsed())
            return cmd_analyze(cfg, a_ckpt, a_manifest, a_csv, a_schema, a_attr, a_from, a_to,
                               a_slices, a_out);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const voxsyn::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const voxsyn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
