#include "ecglang/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace ecglang::synth {

std::array<int, io::kNumLabels> allocate_counts(const std::array<double, io::kNumLabels>& priors,
                                                int n) {
    std::array<int, io::kNumLabels> counts{};
    std::array<double, io::kNumLabels> frac{};
    int assigned = 0;
    for (int c = 0; c < io::kNumLabels; ++c) {
        const double ideal = priors[static_cast<std::size_t>(c)] * n;
        counts[static_cast<std::size_t>(c)] = static_cast<int>(std::floor(ideal));
        frac[static_cast<std::size_t>(c)] = ideal - std::floor(ideal);
        assigned += counts[static_cast<std::size_t>(c)];
    }
    while (assigned < n) {
        int best = 0;
        for (int c = 1; c < io::kNumLabels; ++c)
            if (frac[static_cast<std::size_t>(c)] > frac[static_cast<std::size_t>(best)]) best = c;
        ++counts[static_cast<std::size_t>(best)];
        frac[static_cast<std::size_t>(best)] = -1;
        ++assigned;
    }
    return counts;
}

namespace {

double gauss_bump(double t, double center, double sigma) {
    const double d = (t - center) / sigma;
    return std::exp(-0.5 * d * d);
}

// Smooth plateau between t0 and t1 (ST segment carrier).
double soft_box(double t, double t0, double t1, double edge = 0.01) {
    return 0.5 * (std::tanh((t - t0) / edge) - std::tanh((t - t1) / edge));
}

// Relative per-lead projection of the common beat shape.
constexpr std::array<double, io::kNumLeads> kLeadScale = {0.7, 1.0,  0.6, -0.5, 0.4, 0.8,
                                                          -0.3, 0.5, 0.9, 1.1,  1.0, 0.9};

} // namespace

GeneratedDataset generate(const cfg::SynthConfig& spec, std::uint64_t seed,
                          const std::string& out_dir) {
    if (spec.n_records < 1) throw ConfigError("synth: n_records must be >= 1");
    if (spec.snr_db <= 0) throw ConfigError("synth: snr_db must be positive");

    const double fs = 100.0;
    const double duration = 10.0;
    const auto n_samples = static_cast<Eigen::Index>(fs * duration);

    fs::create_directories(fs::path(out_dir) / "records");

    // Class sequence: counts by largest remainder, order shuffled.
    const auto counts = allocate_counts(spec.priors, spec.n_records);
    std::vector<int> record_class;
    for (int c = 0; c < io::kNumLabels; ++c)
        record_class.insert(record_class.end(), counts[static_cast<std::size_t>(c)], c);
    std::mt19937_64 rng(seed);
    std::shuffle(record_class.begin(), record_class.end(), rng);

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    GeneratedDataset out;
    out.class_counts = counts;
    for (int r = 0; r < spec.n_records; ++r) {
        const int cls = record_class[static_cast<std::size_t>(r)];
        const std::string label_name = io::label_to_string(static_cast<io::Label>(cls));
        auto tmpl_it = spec.classes.find(label_name);
        if (tmpl_it == spec.classes.end())
            throw ConfigError("synth: missing class template for " + label_name);
        const cfg::SynthClassConfig& tmpl = tmpl_it->second;

        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "rec_%04d", r);
        const std::string record_id = idbuf;

        // Beat schedule: fixed period with one per-record jitter factor.
        const double period = 60.0 / tmpl.heart_rate_bpm * (1.0 + 0.02 * (2.0 * unif(rng) - 1.0));
        const double t0 = 0.25 + unif(rng) * std::min(period, 0.5);
        std::vector<double> beat_times;
        for (double t = t0; t < duration - 0.05; t += period) beat_times.push_back(t);

        const double sigma_q = tmpl.qrs_width_s / 2.355; // FWHM -> sigma
        io::EcgRecord rec;
        rec.record_id = record_id;
        rec.fs = fs;
        rec.leads = Eigen::MatrixXd::Zero(io::kNumLeads, n_samples);
        rec.lead_names.assign(io::kDefaultLeadNames.begin(), io::kDefaultLeadNames.end());
        rec.gains.assign(io::kNumLeads, 1000.0); // 1 uV per LSB
        rec.labels = {static_cast<io::Label>(cls)};

        Eigen::VectorXd shape = Eigen::VectorXd::Zero(n_samples);
        for (Eigen::Index s = 0; s < n_samples; ++s) {
            const double t = static_cast<double>(s) / fs;
            double v = 0;
            for (double tb : beat_times) {
                if (std::abs(t - tb) > 0.6) continue;
                v += 0.15 * gauss_bump(t, tb - 0.16, 0.025);            // P wave
                v += tmpl.qrs_amp * gauss_bump(t, tb, sigma_q);         // QRS
                v += tmpl.st_offset * soft_box(t - tb, 0.045, 0.16);    // ST shift
                v += tmpl.t_amp * gauss_bump(t, tb + 0.24, 0.045);      // T wave
            }
            shape[s] = v;
        }

        const double clean_rms = std::sqrt(shape.squaredNorm() / static_cast<double>(n_samples));
        const double noise_sigma = clean_rms * std::pow(10.0, -spec.snr_db / 20.0);
        for (int lead = 0; lead < io::kNumLeads; ++lead) {
            for (Eigen::Index s = 0; s < n_samples; ++s)
                rec.leads(lead, s) = kLeadScale[static_cast<std::size_t>(lead)] * shape[s] +
                                     noise_sigma * normal(rng);
        }

        const std::string prefix = (fs::path(out_dir) / "records" / record_id).string();
        io::write_record_files(rec, prefix);

        // Ground-truth R peaks for the detector tests.
        std::ofstream pk(prefix + ".peaks", std::ios::binary);
        if (!pk) throw DataError("cannot write " + prefix + ".peaks");
        for (double tb : beat_times) {
            const auto idx = static_cast<Eigen::Index>(std::lround(tb * fs));
            if (idx >= 0 && idx < n_samples) pk << idx << '\n';
        }

        io::ManifestEntry entry;
        entry.record_id = record_id;
        entry.path = "records/" + record_id;
        entry.labels = rec.labels;
        const auto& reports = tmpl.reports;
        if (reports.empty()) throw ConfigError("synth: class " + label_name + " has no reports");
        entry.report = reports[rng() % reports.size()];
        out.entries.push_back(std::move(entry));
    }

    io::write_manifest(out.entries, (fs::path(out_dir) / "manifest.csv").string());
    return out;
}

} // namespace ecglang::synth
