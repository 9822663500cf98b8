#include "voxsyn/phantom.hpp"

#include <cmath>
#include <fstream>
#include <tuple>

#include "voxsyn/csvio.hpp"
#include "voxsyn/dataset.hpp"
#include "voxsyn/nifti.hpp"
#include "voxsyn/rng.hpp"

namespace voxsyn::phantom {

namespace {

// Trilinear value noise on a 4x-coarse lattice; smooth, seeded, cheap.
struct ValueNoise {
    Tensor lattice;
    Index gz, gy, gx;

    ValueNoise(const std::array<Index, 3>& size, Rng& rng) {
        gz = size[0] / 4 + 2;
        gy = size[1] / 4 + 2;
        gx = size[2] / 4 + 2;
        lattice.resize({gz, gy, gx});
        for (Index i = 0; i < lattice.size(); ++i) lattice[i] = rng.uniform() * 2.0 - 1.0;
    }

    double at(Index z, Index y, Index x) const {
        const double fz = static_cast<double>(z) / 4.0;
        const double fy = static_cast<double>(y) / 4.0;
        const double fx = static_cast<double>(x) / 4.0;
        const Index z0 = static_cast<Index>(fz), y0 = static_cast<Index>(fy),
                    x0 = static_cast<Index>(fx);
        const double tz = fz - static_cast<double>(z0);
        const double ty = fy - static_cast<double>(y0);
        const double tx = fx - static_cast<double>(x0);
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dz ? tz : 1 - tz) * (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx);
                    acc += w * lattice(z0 + dz, y0 + dy, x0 + dx);
                }
        return acc;
    }
};

bool inside_ellipsoid(Index z, Index y, Index x, const std::array<double, 3>& c,
                      const std::array<double, 3>& r) {
    const double dz = (static_cast<double>(z) - c[0]) / r[0];
    const double dy = (static_cast<double>(y) - c[1]) / r[1];
    const double dx = (static_cast<double>(x) - c[2]) / r[2];
    return dz * dz + dy * dy + dx * dx <= 1.0;
}

}  // namespace

PhantomVolume build_volume(const PhantomConfig& cfg, int index, bool smoker) {
    const auto [Z, Y, X] = std::tuple(cfg.size[0], cfg.size[1], cfg.size[2]);
    Rng rng(derive_seed(cfg.seed, "phantom_" + std::to_string(index)));
    ValueNoise noise(cfg.size, rng);

    // geometry with mild per-subject jitter
    auto jitter = [&](double base) { return base * (1.0 + 0.08 * (rng.uniform() * 2.0 - 1.0)); };
    const std::array<double, 3> right_c{Z / 2.0, Y / 2.0, X * 0.30};
    const std::array<double, 3> left_c{Z / 2.0, Y / 2.0, X * 0.70};
    const std::array<double, 3> lung_r{jitter(Z * 0.38), jitter(Y * 0.30), jitter(X * 0.17)};
    const double airway_r = std::max(1.0, X * 0.06);

    PhantomVolume out;
    out.image_hu.resize({Z, Y, X});
    out.mask.resize({Z, Y, X});
    for (Index z = 0; z < Z; ++z)
        for (Index y = 0; y < Y; ++y)
            for (Index x = 0; x < X; ++x) {
                int label = kBackground;
                double hu = 40.0;  // soft tissue
                const double dax = static_cast<double>(x) - X / 2.0;
                const double day = static_cast<double>(y) - Y / 2.0;
                if (inside_ellipsoid(z, y, x, right_c, lung_r)) {
                    label = kRightLung;
                } else if (inside_ellipsoid(z, y, x, left_c, lung_r)) {
                    label = kLeftLung;
                } else if (dax * dax + day * day <= airway_r * airway_r) {
                    label = kAirway;
                    hu = -1000.0;
                }
                if (label == kRightLung || label == kLeftLung) {
                    hu = cfg.lung_hu + (smoker ? cfg.smoker_shift_hu : 0.0);
                }
                hu += cfg.noise_hu * noise.at(z, y, x);
                out.image_hu(z, y, x) = hu;
                out.mask(z, y, x) = label;
            }

    if (smoker && cfg.smoker_dots > 0) {
        // dot-like density increases inside the lungs
        for (int d = 0; d < cfg.smoker_dots; ++d) {
            const auto& c = (d % 2 == 0) ? right_c : left_c;
            const Index dz = static_cast<Index>(c[0] + (rng.uniform() - 0.5) * lung_r[0]);
            const Index dy = static_cast<Index>(c[1] + (rng.uniform() - 0.5) * lung_r[1]);
            const Index dx = static_cast<Index>(c[2] + (rng.uniform() - 0.5) * lung_r[2]);
            for (Index z = std::max<Index>(0, dz - 1); z <= std::min(Z - 1, dz + 1); ++z)
                for (Index y = std::max<Index>(0, dy - 1); y <= std::min(Y - 1, dy + 1); ++y)
                    for (Index x = std::max<Index>(0, dx - 1); x <= std::min(X - 1, dx + 1); ++x)
                        if (out.mask(z, y, x) == kRightLung || out.mask(z, y, x) == kLeftLung)
                            out.image_hu(z, y, x) += 120.0;
        }
    }
    return out;
}

PhantomDataset generate(const PhantomConfig& cfg, const std::filesystem::path& out_dir) {
    if (cfg.subjects < 1) throw ConfigError("phantom needs at least one subject");
    if (cfg.container != ".nii" && cfg.container != ".rvol")
        throw ConfigError("phantom container must be .nii or .rvol, got " + cfg.container);
    std::filesystem::create_directories(out_dir);

    PhantomDataset out;
    std::vector<dataset::SubjectEntry> entries;
    csvio::Table csv;
    csv.header = {"subject_id", "age", "gender", "smoker"};
    const std::array<double, 3> spacing{2.5, 1.0, 1.0};
    for (int i = 0; i < cfg.subjects; ++i) {
        const bool smoker = (i % 2) == 0;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%03d", i);
        const std::string sid = buf;
        PhantomVolume v = build_volume(cfg, i, smoker);
        const auto img = out_dir / (sid + "_image" + cfg.container);
        const auto msk = out_dir / (sid + "_mask" + cfg.container);
        nifti::write_volume(img, v.image_hu, spacing, nifti::StorageType::Float32);
        Tensor mask_f(v.mask.dims());
        for (Index j = 0; j < mask_f.size(); ++j) mask_f[j] = v.mask[j];
        nifti::write_volume(msk, mask_f, spacing, nifti::StorageType::Uint8);
        entries.push_back({sid, img.filename(), msk.filename()});
        csv.rows.push_back({sid, std::to_string(35 + 7 * i), (i % 2) ? "female" : "male",
                            smoker ? "yes" : "no"});
        out.subject_ids.push_back(sid);
    }
    out.manifest = out_dir / "dataset.tsv";
    out.csv = out_dir / "clinical.csv";
    dataset::write_manifest(entries, out.manifest);
    csvio::write_csv(out.csv, csv);
    return out;
}

}  // namespace voxsyn::phantom
