#include "fedbayes/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fedbayes/errors.hpp"

namespace fedbayes::expt {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_u64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%" PRIu64, v);
    return buf;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad number '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad integer '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key '" + key + "': bad unsigned '" + value + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos
                                                               : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(v[i]);
    }
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string join_modes(const std::vector<fed::RunMode>& modes) {
    std::string out;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (i) out += ',';
        out += modes[i].label();
    }
    return out;
}

} // namespace

void ExperimentConfig::validate() const {
    if (schema != 1) throw ArgumentError("config: unsupported schema " + std::to_string(schema));
    if (dataset != "synth" && dataset != "idx" && dataset != "csv")
        throw ArgumentError("config: dataset must be synth|idx|csv, got '" + dataset + "'");
    if (dataset == "synth") {
        if (synth_classes < 2 || synth_dim < 1 || synth_per_class < 1)
            throw ArgumentError("config: synth_classes >= 2, synth_dim >= 1, synth_per_class >= 1");
        if (!(synth_spread > 0.0)) throw ArgumentError("config: synth_spread must be positive");
    }
    if (dataset == "idx" && (idx_images.empty() || idx_labels.empty()))
        throw ArgumentError("config: idx dataset needs idx_images and idx_labels");
    if (dataset == "csv" && (csv_path.empty() || csv_classes < 2))
        throw ArgumentError("config: csv dataset needs csv_path and csv_classes >= 2");
    if (!(data_fraction > 0.0) || data_fraction > 1.0)
        throw ArgumentError("config: data_fraction must be in (0, 1]");
    if (noise_mode != "feature_gauss" && noise_mode != "label_flip")
        throw ArgumentError("config: noise_mode must be feature_gauss|label_flip");
    if (noise_eps < 0.0) throw ArgumentError("config: noise_eps must be >= 0");
    if (noise_mode == "label_flip" && noise_eps > 1.0)
        throw ArgumentError("config: label_flip noise_eps must be <= 1");
    if (partition != "dirichlet" && partition != "step")
        throw ArgumentError("config: partition must be dirichlet|step");
    if (partition == "dirichlet" && !(dirichlet_alpha > 0.0))
        throw ArgumentError("config: dirichlet_alpha must be positive");
    if (partition == "step" && (step_major < 1 || step_major_per < 0 || step_minor_per < 0))
        throw ArgumentError("config: step partition parameters out of range");
    if (n_clients < 1) throw ArgumentError("config: n_clients must be >= 1");
    if (rounds < 1) throw ArgumentError("config: rounds must be >= 1");
    if (local_epochs < 1) throw ArgumentError("config: local_epochs must be >= 1");
    if (t_temp < 1) throw ArgumentError("config: t_temp must be >= 1");
    if (batch_size < 1) throw ArgumentError("config: batch_size must be >= 1");
    if (candidate_policy != "fixed" && candidate_policy != "schedule")
        throw ArgumentError("config: candidate_policy must be fixed|schedule");
    if (candidate_policy == "fixed") {
        if (lr_candidates.empty())
            throw ArgumentError("config: lr_candidates must not be empty");
        for (std::size_t i = 0; i < lr_candidates.size(); ++i) {
            if (!(lr_candidates[i] > 0.0))
                throw ArgumentError("config: lr candidates must be positive");
            for (std::size_t j = i + 1; j < lr_candidates.size(); ++j)
                if (lr_candidates[i] == lr_candidates[j])
                    throw ArgumentError("config: duplicate lr candidate");
        }
    } else if (!(schedule_a > 0.0)) {
        throw ArgumentError("config: schedule_a must be positive");
    }
    if (!(sigma_init > 0.0)) throw ArgumentError("config: sigma_init must be positive");
    if (!(prior_sigma0 > 0.0)) throw ArgumentError("config: prior_sigma0 must be positive");
    if (n_mc_train < 1 || n_mc_eval < 1) throw ArgumentError("config: n_mc must be >= 1");
    if (modes.empty()) throw ArgumentError("config: at least one mode required");
}

std::string ExperimentConfig::resolved_run_id() const {
    if (!run_id.empty()) return run_id;
    return "seed" + fmt_u64(master_seed);
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::to_kv() const {
    return {
        {"schema", std::to_string(schema)},
        {"run_id", run_id},
        {"dataset", dataset},
        {"synth_classes", std::to_string(synth_classes)},
        {"synth_dim", std::to_string(synth_dim)},
        {"synth_per_class", std::to_string(synth_per_class)},
        {"synth_spread", fmt_double(synth_spread)},
        {"idx_images", idx_images},
        {"idx_labels", idx_labels},
        {"csv_path", csv_path},
        {"csv_classes", std::to_string(csv_classes)},
        {"data_fraction", fmt_double(data_fraction)},
        {"noise_mode", noise_mode},
        {"noise_eps", fmt_double(noise_eps)},
        {"partition", partition},
        {"dirichlet_alpha", fmt_double(dirichlet_alpha)},
        {"step_major", std::to_string(step_major)},
        {"step_major_per", std::to_string(step_major_per)},
        {"step_minor_per", std::to_string(step_minor_per)},
        {"n_clients", std::to_string(n_clients)},
        {"rounds", std::to_string(rounds)},
        {"local_epochs", std::to_string(local_epochs)},
        {"t_temp", std::to_string(t_temp)},
        {"batch_size", std::to_string(batch_size)},
        {"lr_candidates", join_doubles(lr_candidates)},
        {"candidate_policy", candidate_policy},
        {"schedule_a", fmt_double(schedule_a)},
        {"meta_overlap", meta_overlap ? "1" : "0"},
        {"weight_by_size", weight_by_size ? "1" : "0"},
        {"hidden", join_sizes(hidden)},
        {"sigma_init", fmt_double(sigma_init)},
        {"prior_mu0", fmt_double(prior_mu0)},
        {"prior_sigma0", fmt_double(prior_sigma0)},
        {"kl_scale", kl_scale > 0.0 ? fmt_double(kl_scale) : "auto"},
        {"n_mc_train", std::to_string(n_mc_train)},
        {"n_mc_eval", std::to_string(n_mc_eval)},
        {"master_seed", fmt_u64(master_seed)},
        {"modes", join_modes(modes)},
        {"out", out},
    };
}

const std::vector<std::string>& ExperimentConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [key, value] : ExperimentConfig().to_kv()) k.push_back(key);
        return k;
    }();
    return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "schema") schema = parse_int(key, value);
    else if (key == "run_id") run_id = value;
    else if (key == "dataset") dataset = value;
    else if (key == "synth_classes") synth_classes = parse_int(key, value);
    else if (key == "synth_dim") synth_dim = parse_int(key, value);
    else if (key == "synth_per_class") synth_per_class = parse_int(key, value);
    else if (key == "synth_spread") synth_spread = parse_double(key, value);
    else if (key == "idx_images") idx_images = value;
    else if (key == "idx_labels") idx_labels = value;
    else if (key == "csv_path") csv_path = value;
    else if (key == "csv_classes") csv_classes = parse_int(key, value);
    else if (key == "data_fraction") data_fraction = parse_double(key, value);
    else if (key == "noise_mode") noise_mode = value;
    else if (key == "noise_eps") noise_eps = parse_double(key, value);
    else if (key == "partition") partition = value;
    else if (key == "dirichlet_alpha") dirichlet_alpha = parse_double(key, value);
    else if (key == "step_major") step_major = parse_int(key, value);
    else if (key == "step_major_per") step_major_per = parse_int(key, value);
    else if (key == "step_minor_per") step_minor_per = parse_int(key, value);
    else if (key == "n_clients") n_clients = parse_int(key, value);
    else if (key == "rounds") rounds = parse_int(key, value);
    else if (key == "local_epochs") local_epochs = parse_int(key, value);
    else if (key == "t_temp") t_temp = parse_int(key, value);
    else if (key == "batch_size") batch_size = parse_int(key, value);
    else if (key == "lr_candidates") {
        lr_candidates.clear();
        for (const auto& tok : split(value, ','))
            lr_candidates.push_back(parse_double(key, tok));
    } else if (key == "candidate_policy") candidate_policy = value;
    else if (key == "schedule_a") schedule_a = parse_double(key, value);
    else if (key == "meta_overlap") meta_overlap = parse_int(key, value) != 0;
    else if (key == "weight_by_size") weight_by_size = parse_int(key, value) != 0;
    else if (key == "hidden") {
        hidden.clear();
        for (const auto& tok : split(value, ',')) {
            const int h = parse_int(key, tok);
            if (h < 1) throw ParseError("config key 'hidden': sizes must be >= 1");
            hidden.push_back(static_cast<std::size_t>(h));
        }
    } else if (key == "sigma_init") sigma_init = parse_double(key, value);
    else if (key == "prior_mu0") prior_mu0 = parse_double(key, value);
    else if (key == "prior_sigma0") prior_sigma0 = parse_double(key, value);
    else if (key == "kl_scale") kl_scale = value == "auto" ? 0.0 : parse_double(key, value);
    else if (key == "n_mc_train") n_mc_train = parse_int(key, value);
    else if (key == "n_mc_eval") n_mc_eval = parse_int(key, value);
    else if (key == "master_seed") master_seed = parse_u64(key, value);
    else if (key == "modes") {
        modes.clear();
        for (const auto& tok : split(value, ','))
            modes.push_back(fed::RunMode::parse(tok));
    } else if (key == "out") out = value;
    else throw ParseError("unknown config key '" + key + "'");
}

void ExperimentConfig::save(std::ostream& os) const {
    for (const auto& [key, value] : to_kv()) os << key << "=" << value << "\n";
}

ExperimentConfig ExperimentConfig::parse(std::istream& is) {
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        // trim
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        if (line[start] == '#') continue;
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected key=value, got '" + line + "'");
        try {
            cfg.set(line.substr(start, eq - start), line.substr(eq + 1));
        } catch (const ParseError& e) {
            throw ParseError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file '" + path + "'");
    return parse(is);
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return to_kv() == other.to_kv();
}

} // namespace fedbayes::expt
