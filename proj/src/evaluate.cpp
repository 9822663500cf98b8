#include "voxsyn/evaluate.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "voxsyn/csvio.hpp"

namespace voxsyn::evaluation {

using nlohmann::json;

MetricReport evaluate_model(training::GeneratorBundle& model, const dataset::Dataset& test_set,
                            const embedding::EncoderHandle* encoder,
                            extractor::FeatureExtractor& extractor, const EvalProtocol& protocol) {
    if (test_set.samples.empty()) throw ValidationError("evaluation set is empty");
    if (protocol.crops_per_subject < 1)
        throw ConfigError("crops_per_subject must be positive");
    if (model.use_text) {
        if (!encoder) throw ConfigError("text-conditioned model needs an encoder to evaluate");
        if (!test_set.has_text)
            throw ConfigError("text-conditioned model needs clinical records in the test set");
    }

    std::vector<Tensor> real_crops, fake_crops;
    for (size_t si = 0; si < test_set.samples.size(); ++si) {
        const auto& sample = test_set.samples[si];
        embedding::TextEmbedding emb;
        const embedding::TextEmbedding* ep = nullptr;
        if (model.use_text) {
            emb = encoder->embed(test_set.texts[si].text);
            ep = &emb;
        }
        std::vector<crops::Crop> cs;
        try {
            cs = crops::eval_crops(sample, protocol.crop, protocol.seed,
                                   protocol.crops_per_subject);
        } catch (const Error& e) {
            throw ValidationError("subject '" + sample.subject_id + "': " + e.what());
        }
        for (size_t ci = 0; ci < cs.size(); ++ci) {
            real_crops.push_back(cs[ci].image);
            Rng synth_rng(derive_seed(derive_seed(protocol.seed, "synthesis"),
                                      sample.subject_id + "#" + std::to_string(ci)));
            try {
                Tensor synth = training::synthesize_crop(model, cs[ci].mask, ep, synth_rng);
                fake_crops.push_back(
                    synth.reshaped({synth.dim(2), synth.dim(3), synth.dim(4)}));
            } catch (const Error& e) {
                throw NumericalError("subject '" + sample.subject_id + "' crop " +
                                     std::to_string(ci) + ": " + e.what());
            }
        }
    }

    MetricReport r = evaluate_sets(real_crops, fake_crops, extractor, protocol);
    r.protocol["subjects"] = static_cast<long>(test_set.samples.size());
    return r;
}

MetricReport evaluate_sets(const std::vector<Tensor>& real_crops,
                           const std::vector<Tensor>& fake_crops,
                           extractor::FeatureExtractor& extractor, const EvalProtocol& protocol) {
    extractor::FeatureExtraction real_fx = extractor.extract(real_crops);
    extractor::FeatureExtraction fake_fx = extractor.extract(fake_crops);
    metrics::FeatureSet real_set{real_fx.features, real_fx.extractor_id};
    metrics::FeatureSet fake_set{fake_fx.features, fake_fx.extractor_id};

    MetricReport r;
    r.n_real = static_cast<long>(real_crops.size());
    r.n_fake = static_cast<long>(fake_crops.size());
    r.extractor_id = real_fx.extractor_id;
    r.fid = metrics::fid(real_set, fake_set);
    const Index subset_size =
        protocol.kid_subset_size > 0
            ? protocol.kid_subset_size
            : std::min<Index>({real_set.count(), fake_set.count(), 100});
    metrics::KidResult kr =
        metrics::kid(real_set, fake_set, protocol.kid_subsets, subset_size,
                     derive_seed(protocol.seed, "kid"));
    r.kid_mean = kr.mean;
    r.kid_std = kr.stddev;
    metrics::IsResult ir = metrics::inception_score(fake_fx.class_probs, protocol.is_folds);
    r.is_mean = ir.mean;
    r.is_std = ir.stddev;
    r.protocol = {{"seed", protocol.seed},
                  {"crops_per_subject", protocol.crops_per_subject},
                  {"crop_size", {protocol.crop.size[0], protocol.crop.size[1],
                                 protocol.crop.size[2]}},
                  {"kid_subsets", kr.subsets},
                  {"kid_subset_size", kr.subset_size},
                  {"is_folds", ir.folds}};
    return r;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_report(const MetricReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metric report: " + path.string());
    out << "voxsyn_metric_report 1\n";
    out << "fid " << fmt_double(r.fid) << "\n";
    out << "kid_mean " << fmt_double(r.kid_mean) << "\n";
    out << "kid_std " << fmt_double(r.kid_std) << "\n";
    out << "is_mean " << fmt_double(r.is_mean) << "\n";
    out << "is_std " << fmt_double(r.is_std) << "\n";
    out << "n_real " << r.n_real << "\n";
    out << "n_fake " << r.n_fake << "\n";
    out << "extractor " << r.extractor_id << "\n";
    out << "checkpoint " << r.checkpoint << "\n";
    out << "protocol " << r.protocol.dump() << "\n";
}

MetricReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metric report: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "voxsyn_metric_report 1")
        throw IoError("not a metric report: " + path.string());
    MetricReport r;
    while (std::getline(in, line)) {
        const size_t sp = line.find(' ');
        if (sp == std::string::npos) continue;
        const std::string key = line.substr(0, sp);
        const std::string val = line.substr(sp + 1);
        if (key == "fid") r.fid = std::stod(val);
        else if (key == "kid_mean") r.kid_mean = std::stod(val);
        else if (key == "kid_std") r.kid_std = std::stod(val);
        else if (key == "is_mean") r.is_mean = std::stod(val);
        else if (key == "is_std") r.is_std = std::stod(val);
        else if (key == "n_real") r.n_real = std::stol(val);
        else if (key == "n_fake") r.n_fake = std::stol(val);
        else if (key == "extractor") r.extractor_id = val;
        else if (key == "checkpoint") r.checkpoint = val;
        else if (key == "protocol") r.protocol = json::parse(val);
    }
    return r;
}

void append_report_csv(const MetricReport& r, const std::string& model_label,
                       const std::filesystem::path& path) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append report csv: " + path.string());
    if (fresh) out << "model,fid,kid_mean,kid_std,is_mean,is_std,n_real,n_fake,extractor\n";
    out << csvio::escape_field(model_label) << ',' << fmt_double(r.fid) << ','
        << fmt_double(r.kid_mean) << ',' << fmt_double(r.kid_std) << ',' << fmt_double(r.is_mean)
        << ',' << fmt_double(r.is_std) << ',' << r.n_real << ',' << r.n_fake << ','
        << csvio::escape_field(r.extractor_id) << '\n';
}

}  // namespace voxsyn::evaluation
