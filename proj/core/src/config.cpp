#include "cflsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

// Raw key/value store for the TOML subset: sections, scalars, single-line
// arrays, double-quoted strings, # comments.
class RawConfig {
  public:
    RawConfig(const std::string& text, const std::string& origin) : origin_(origin) {
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = trim(strip_comment(line));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    fail(lineno, "unterminated section header: " + line);
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) fail(lineno, "empty section name");
                sections_.insert(section);
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) fail(lineno, "expected key = value: " + line);
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty() || value.empty()) fail(lineno, "expected key = value: " + line);
            if (section.empty()) fail(lineno, "key outside any [section]: " + key);
            const std::string full = section + "." + key;
            if (values_.count(full)) fail(lineno, "duplicate key: " + full);
            values_[full] = value;
        }
    }

    bool has(const std::string& full) const { return values_.count(full) > 0; }

    std::string raw(const std::string& full) {
        used_.insert(full);
        return values_.at(full);
    }

    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

    const std::set<std::string>& sections() const { return sections_; }

  private:
    [[noreturn]] void fail(int lineno, const std::string& msg) const {
        throw InputError(origin_ + ":" + std::to_string(lineno) + ": " + msg);
    }

    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
    std::set<std::string> sections_;
};

class Reader {
  public:
    Reader(RawConfig& raw) : raw_(raw) {}

    void get(const std::string& key, std::string& out) {
        if (!raw_.has(key)) return;
        std::string v = raw_.raw(key);
        if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
            problem(key, "expected a double-quoted string, got " + v);
            return;
        }
        out = v.substr(1, v.size() - 2);
    }

    void get(const std::string& key, bool& out) {
        if (!raw_.has(key)) return;
        const std::string v = raw_.raw(key);
        if (v == "true") out = true;
        else if (v == "false") out = false;
        else problem(key, "expected true or false, got " + v);
    }

    void get(const std::string& key, double& out) {
        if (!raw_.has(key)) return;
        if (!parse_double(raw_.raw(key), out)) problem(key, "expected a number");
    }

    void get(const std::string& key, int& out) {
        long v = out;
        get_long(key, v);
        out = static_cast<int>(v);
    }

    void get(const std::string& key, long& out) { get_long(key, out); }

    void get(const std::string& key, std::vector<double>& out) {
        std::vector<std::string> items;
        if (!get_array(key, items)) return;
        out.clear();
        for (const std::string& it : items) {
            double v;
            if (!parse_double(it, v)) {
                problem(key, "expected numeric array element, got " + it);
                return;
            }
            out.push_back(v);
        }
    }

    void get(const std::string& key, std::vector<long>& out) {
        std::vector<std::string> items;
        if (!get_array(key, items)) return;
        out.clear();
        for (const std::string& it : items) {
            long v;
            if (!parse_long(it, v)) {
                problem(key, "expected integer array element, got " + it);
                return;
            }
            out.push_back(v);
        }
    }

    void get(const std::string& key, std::vector<std::uint64_t>& out) {
        std::vector<long> longs;
        bool had = raw_.has(key);
        get(key, longs);
        if (!had) return;
        out.clear();
        for (long v : longs) {
            if (v < 0) {
                problem(key, "seeds must be non-negative");
                return;
            }
            out.push_back(static_cast<std::uint64_t>(v));
        }
    }

    template <typename T, typename Parse>
    void get_enum(const std::string& key, T& out, Parse parse) {
        std::string name;
        bool had = raw_.has(key);
        get(key, name);
        if (!had) return;
        try {
            out = parse(name);
        } catch (const InputError& e) {
            problem(key, e.what());
        }
    }

    void problem(const std::string& key, const std::string& msg) {
        problems_.push_back(key + ": " + msg);
    }

    const std::vector<std::string>& problems() const { return problems_; }

  private:
    void get_long(const std::string& key, long& out) {
        if (!raw_.has(key)) return;
        if (!parse_long(raw_.raw(key), out)) problem(key, "expected an integer");
    }

    bool get_array(const std::string& key, std::vector<std::string>& items) {
        if (!raw_.has(key)) return false;
        const std::string v = raw_.raw(key);
        if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
            problem(key, "expected an array [ ... ], got " + v);
            return false;
        }
        const std::string body = v.substr(1, v.size() - 2);
        items.clear();
        std::string cur;
        for (char c : body) {
            if (c == ',') {
                items.push_back(trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        cur = trim(cur);
        if (!cur.empty()) items.push_back(cur);
        return true;
    }

    static bool parse_double(const std::string& s, double& out) {
        try {
            std::size_t pos = 0;
            out = std::stod(s, &pos);
            return pos == s.size();
        } catch (const std::exception&) {
            return false;
        }
    }

    static bool parse_long(const std::string& s, long& out) {
        try {
            std::size_t pos = 0;
            out = std::stol(s, &pos);
            return pos == s.size();
        } catch (const std::exception&) {
            return false;
        }
    }

    RawConfig& raw_;
    std::vector<std::string> problems_;
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    RawConfig raw(text, origin);
    Reader r(raw);
    ExperimentConfig cfg;

    static const std::set<std::string> known_sections = {
        "run",      "task",       "population", "trace", "policy",
        "representation", "clustering", "training",   "selection", "time"};
    for (const std::string& s : raw.sections())
        if (!known_sections.count(s)) r.problem(s, "unknown section");

    r.get("run.name", cfg.run.name);
    r.get("run.seeds", cfg.run.seeds);
    if (raw.has("run.seed")) {
        long s = -1;
        r.get("run.seed", s);
        if (s >= 0) cfg.run.seeds = {static_cast<std::uint64_t>(s)};
    }
    r.get("run.output_dir", cfg.run.output_dir);
    r.get("run.checkpoint_every", cfg.run.checkpoint_every);
    r.get("run.eval_targets", cfg.run.eval_targets);
    r.get("run.final_accuracy_window", cfg.run.final_accuracy_window);

    r.get("task.num_labels", cfg.task.num_labels);
    r.get("task.input_dim", cfg.task.input_dim);
    r.get("task.k_true", cfg.task.k_true);
    r.get("task.label_noise", cfg.task.label_noise);
    r.get("task.blob_sigma", cfg.task.blob_sigma);
    r.get("task.within_weight", cfg.task.within_weight);
    r.get("task.outside_weight", cfg.task.outside_weight);
    r.get_enum("task.model", cfg.task.model, model_kind_from_string);
    r.get("task.hidden_dim", cfg.task.hidden_dim);

    r.get("population.num_clients", cfg.population.num_clients);
    r.get("population.samples_per_client", cfg.population.samples_per_client);
    r.get("population.dirichlet_alpha", cfg.population.dirichlet_alpha);
    r.get_enum("population.shared_level", cfg.population.shared_level,
               shared_level_from_string);
    r.get("population.device_profile_file", cfg.population.device_profile_file);
    r.get("population.concept_rotation", cfg.population.concept_rotation);

    r.get("trace.kind", cfg.trace.kind);
    r.get("trace.num_intervals", cfg.trace.num_intervals);
    r.get("trace.rounds_between", cfg.trace.rounds_between);
    r.get("trace.retention_rounds", cfg.trace.retention_rounds);
    r.get("trace.warmup_rounds_of_data", cfg.trace.warmup_rounds_of_data);
    r.get("trace.shift_at_round", cfg.trace.shift_at_round);
    r.get("trace.shift_fraction", cfg.trace.shift_fraction);
    r.get("trace.shift_wave_rounds", cfg.trace.shift_wave_rounds);
    r.get("trace.concept_drift_fraction", cfg.trace.concept_drift_fraction);
    r.get("trace.concept_drift_rounds", cfg.trace.concept_drift_rounds);
    r.get("trace.malicious_fraction", cfg.trace.malicious_fraction);

    r.get_enum("policy.mode", cfg.policy.mode, drift_mode_from_string);
    r.get("policy.tau_fraction", cfg.policy.tau_fraction);
    r.get("policy.pairwise_variant", cfg.policy.pairwise_variant);
    r.get("policy.pairwise_delta", cfg.policy.pairwise_delta);
    r.get("policy.pairwise_c", cfg.policy.pairwise_c);
    r.get("policy.initial_clusters", cfg.policy.initial_clusters);
    r.get("policy.drift_eps", cfg.policy.drift_eps);

    r.get("representation.kind", cfg.representation.kind);
    r.get_enum("representation.metric", cfg.representation.metric, metric_from_string);
    r.get("representation.embedding_dim", cfg.representation.embedding_dim);
    r.get("representation.extractor_hidden", cfg.representation.extractor_hidden);

    r.get("clustering.k_min", cfg.clustering.k_min);
    r.get("clustering.k_max", cfg.clustering.k_max);

    r.get_enum("training.aggregation", cfg.training.aggregation, aggregation_from_string);
    r.get("training.eta", cfg.training.eta);
    r.get("training.local_steps", cfg.training.local_steps);
    r.get("training.batch_size", cfg.training.batch_size);
    r.get("training.participants_per_round", cfg.training.participants_per_round);
    r.get("training.rounds_per_event", cfg.training.rounds_per_event);
    r.get("training.total_events", cfg.training.total_events);
    r.get("training.mu_prox", cfg.training.mu_prox);
    r.get("training.yogi_beta1", cfg.training.yogi_beta1);
    r.get("training.yogi_beta2", cfg.training.yogi_beta2);
    r.get("training.yogi_eta_server", cfg.training.yogi_eta_server);
    r.get("training.yogi_tau_adapt", cfg.training.yogi_tau_adapt);
    r.get("training.qfedavg_q", cfg.training.qfedavg_q);
    r.get("training.sampling_with_replacement", cfg.training.sampling_with_replacement);

    r.get_enum("selection.kind", cfg.selection.kind, selector_from_string);
    r.get("selection.explore_fraction", cfg.selection.explore_fraction);
    r.get("selection.penalty_alpha", cfg.selection.penalty_alpha);
    r.get("selection.deadline_s", cfg.selection.deadline_s);

    r.get("time.model_bytes", cfg.time.model_bytes);
    r.get("time.round_deadline_s", cfg.time.round_deadline_s);

    std::vector<std::string> problems = r.problems();
    for (const std::string& k : raw.unused_keys()) problems.push_back(k + ": unknown key");
    if (!problems.empty()) {
        std::string msg = "invalid config (" + origin + "):";
        for (const std::string& p : problems) msg += "\n  - " + p;
        throw InputError(msg);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

void ExperimentConfig::validate() const {
    std::vector<std::string> problems;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    };

    need(!run.name.empty(), "run.name: must not be empty");
    need(!run.seeds.empty(), "run.seeds: need at least one seed");
    need(run.final_accuracy_window >= 1, "run.final_accuracy_window: must be >= 1");
    for (double t : run.eval_targets)
        need(t > 0.0 && t < 1.0, "run.eval_targets: targets must lie in (0, 1)");

    need(task.num_labels >= 1, "task.num_labels: must be >= 1");
    need(task.input_dim >= 1, "task.input_dim: must be >= 1");
    need(task.k_true >= 1, "task.k_true: must be >= 1");
    need(task.label_noise >= 0.0 && task.label_noise < 1.0,
         "task.label_noise: must lie in [0, 1)");
    need(task.blob_sigma > 0.0, "task.blob_sigma: must be positive");
    need(task.within_weight > 0.0 && task.outside_weight > 0.0,
         "task.within_weight/outside_weight: must be positive");
    need(task.hidden_dim >= 1, "task.hidden_dim: must be >= 1");

    need(population.num_clients >= task.k_true,
         "population.num_clients: must be >= task.k_true");
    need(population.samples_per_client >= 5,
         "population.samples_per_client: must be >= 5");
    need(population.dirichlet_alpha > 0.0, "population.dirichlet_alpha: must be positive");

    need(trace.kind == "interval" || trace.kind == "label_bucket" || trace.kind == "static",
         "trace.kind: must be interval, label_bucket, or static");
    need(trace.num_intervals >= 1, "trace.num_intervals: must be >= 1");
    need(trace.rounds_between >= 1, "trace.rounds_between: must be >= 1");
    need(trace.retention_rounds >= 0, "trace.retention_rounds: must be >= 0");
    need(trace.warmup_rounds_of_data >= 0, "trace.warmup_rounds_of_data: must be >= 0");
    need(trace.shift_fraction >= 0.0 && trace.shift_fraction <= 1.0,
         "trace.shift_fraction: must lie in [0, 1]");
    need(trace.concept_drift_fraction >= 0.0 && trace.concept_drift_fraction <= 1.0,
         "trace.concept_drift_fraction: must lie in [0, 1]");
    need(trace.malicious_fraction >= 0.0 && trace.malicious_fraction <= 1.0,
         "trace.malicious_fraction: must lie in [0, 1]");

    need(policy.tau_fraction >= 0.0, "policy.tau_fraction: must be >= 0");
    need(policy.pairwise_delta >= 0.0, "policy.pairwise_delta: must be >= 0");
    need(policy.pairwise_c > 0.0, "policy.pairwise_c: must be positive");
    need(policy.initial_clusters >= 0, "policy.initial_clusters: must be >= 0");
    need(policy.drift_eps >= 0.0, "policy.drift_eps: must be >= 0");

    const bool histo = representation.kind == "label_histogram";
    need(histo || representation.kind == "embedding" ||
             representation.kind == "gradient_sketch",
         "representation.kind: must be label_histogram, embedding, or gradient_sketch");
    need(representation.embedding_dim >= 1, "representation.embedding_dim: must be >= 1");
    need(representation.extractor_hidden >= 1,
         "representation.extractor_hidden: must be >= 1");
    need(histo || representation.metric != Metric::JensenShannon,
         "representation.metric: jensen_shannon requires label_histogram representations");
    need(histo || trace.malicious_fraction == 0.0,
         "trace.malicious_fraction: permuted reporting requires label_histogram "
         "representations");

    need(clustering.k_min >= 0 && clustering.k_max >= 0,
         "clustering.k_min/k_max: must be >= 0");
    need(clustering.k_max == 0 || clustering.k_min <= clustering.k_max,
         "clustering.k_min: must be <= clustering.k_max");
    need(clustering.k_max <= population.num_clients,
         "clustering.k_max: must be <= population.num_clients");
    need(policy.initial_clusters <= population.num_clients,
         "policy.initial_clusters: must be <= population.num_clients");

    need(training.eta > 0.0, "training.eta: must be positive");
    need(training.local_steps >= 1, "training.local_steps: must be >= 1");
    need(training.batch_size >= 1, "training.batch_size: must be >= 1");
    need(training.participants_per_round >= 1,
         "training.participants_per_round: must be >= 1");
    need(training.rounds_per_event >= 1, "training.rounds_per_event: must be >= 1");
    need(training.total_events >= 1, "training.total_events: must be >= 1");
    need(training.mu_prox >= 0.0, "training.mu_prox: must be >= 0");
    need(training.yogi_beta1 >= 0.0 && training.yogi_beta1 < 1.0,
         "training.yogi_beta1: must lie in [0, 1)");
    need(training.yogi_beta2 >= 0.0 && training.yogi_beta2 < 1.0,
         "training.yogi_beta2: must lie in [0, 1)");
    need(training.yogi_eta_server > 0.0, "training.yogi_eta_server: must be positive");
    need(training.yogi_tau_adapt > 0.0, "training.yogi_tau_adapt: must be positive");
    need(training.qfedavg_q >= 0.0, "training.qfedavg_q: must be >= 0");

    need(selection.explore_fraction >= 0.0 && selection.explore_fraction <= 1.0,
         "selection.explore_fraction: must lie in [0, 1]");
    need(selection.penalty_alpha >= 0.0, "selection.penalty_alpha: must be >= 0");

    need(time.model_bytes >= 0.0, "time.model_bytes: must be >= 0");

    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const std::string& p : problems) msg += "\n  - " + p;
        throw InputError(msg);
    }
}

namespace {

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

template <typename T>
std::string list_str(const std::vector<T>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_same_v<T, double>)
            out += format_double(v[i]);
        else
            out += std::to_string(v[i]);
    }
    return out + "]";
}

}  // namespace

std::string canonical_toml(const ExperimentConfig& cfg) {
    std::ostringstream o;
    o << "[run]\n";
    o << "name = " << quoted(cfg.run.name) << "\n";
    o << "seeds = " << list_str(cfg.run.seeds) << "\n";
    o << "output_dir = " << quoted(cfg.run.output_dir) << "\n";
    o << "checkpoint_every = " << cfg.run.checkpoint_every << "\n";
    o << "eval_targets = " << list_str(cfg.run.eval_targets) << "\n";
    o << "final_accuracy_window = " << cfg.run.final_accuracy_window << "\n";
    o << "\n[task]\n";
    o << "num_labels = " << cfg.task.num_labels << "\n";
    o << "input_dim = " << cfg.task.input_dim << "\n";
    o << "k_true = " << cfg.task.k_true << "\n";
    o << "label_noise = " << format_double(cfg.task.label_noise) << "\n";
    o << "blob_sigma = " << format_double(cfg.task.blob_sigma) << "\n";
    o << "within_weight = " << format_double(cfg.task.within_weight) << "\n";
    o << "outside_weight = " << format_double(cfg.task.outside_weight) << "\n";
    o << "model = " << quoted(to_string(cfg.task.model)) << "\n";
    o << "hidden_dim = " << cfg.task.hidden_dim << "\n";
    o << "\n[population]\n";
    o << "num_clients = " << cfg.population.num_clients << "\n";
    o << "samples_per_client = " << cfg.population.samples_per_client << "\n";
    o << "dirichlet_alpha = " << format_double(cfg.population.dirichlet_alpha) << "\n";
    o << "shared_level = " << quoted(to_string(cfg.population.shared_level)) << "\n";
    o << "device_profile_file = " << quoted(cfg.population.device_profile_file) << "\n";
    o << "concept_rotation = " << cfg.population.concept_rotation << "\n";
    o << "\n[trace]\n";
    o << "kind = " << quoted(cfg.trace.kind) << "\n";
    o << "num_intervals = " << cfg.trace.num_intervals << "\n";
    o << "rounds_between = " << cfg.trace.rounds_between << "\n";
    o << "retention_rounds = " << cfg.trace.retention_rounds << "\n";
    o << "warmup_rounds_of_data = " << cfg.trace.warmup_rounds_of_data << "\n";
    o << "shift_at_round = " << cfg.trace.shift_at_round << "\n";
    o << "shift_fraction = " << format_double(cfg.trace.shift_fraction) << "\n";
    o << "shift_wave_rounds = " << list_str(cfg.trace.shift_wave_rounds) << "\n";
    o << "concept_drift_fraction = " << format_double(cfg.trace.concept_drift_fraction)
      << "\n";
    o << "concept_drift_rounds = " << list_str(cfg.trace.concept_drift_rounds) << "\n";
    o << "malicious_fraction = " << format_double(cfg.trace.malicious_fraction) << "\n";
    o << "\n[policy]\n";
    o << "mode = " << quoted(to_string(cfg.policy.mode)) << "\n";
    o << "tau_fraction = " << format_double(cfg.policy.tau_fraction) << "\n";
    o << "pairwise_variant = " << (cfg.policy.pairwise_variant ? "true" : "false") << "\n";
    o << "pairwise_delta = " << format_double(cfg.policy.pairwise_delta) << "\n";
    o << "pairwise_c = " << format_double(cfg.policy.pairwise_c) << "\n";
    o << "initial_clusters = " << cfg.policy.initial_clusters << "\n";
    o << "drift_eps = " << format_double(cfg.policy.drift_eps) << "\n";
    o << "\n[representation]\n";
    o << "kind = " << quoted(cfg.representation.kind) << "\n";
    o << "metric = " << quoted(to_string(cfg.representation.metric)) << "\n";
    o << "embedding_dim = " << cfg.representation.embedding_dim << "\n";
    o << "extractor_hidden = " << cfg.representation.extractor_hidden << "\n";
    o << "\n[clustering]\n";
    o << "k_min = " << cfg.clustering.k_min << "\n";
    o << "k_max = " << cfg.clustering.k_max << "\n";
    o << "\n[training]\n";
    o << "aggregation = " << quoted(to_string(cfg.training.aggregation)) << "\n";
    o << "eta = " << format_double(cfg.training.eta) << "\n";
    o << "local_steps = " << cfg.training.local_steps << "\n";
    o << "batch_size = " << cfg.training.batch_size << "\n";
    o << "participants_per_round = " << cfg.training.participants_per_round << "\n";
    o << "rounds_per_event = " << cfg.training.rounds_per_event << "\n";
    o << "total_events = " << cfg.training.total_events << "\n";
    o << "mu_prox = " << format_double(cfg.training.mu_prox) << "\n";
    o << "yogi_beta1 = " << format_double(cfg.training.yogi_beta1) << "\n";
    o << "yogi_beta2 = " << format_double(cfg.training.yogi_beta2) << "\n";
    o << "yogi_eta_server = " << format_double(cfg.training.yogi_eta_server) << "\n";
    o << "yogi_tau_adapt = " << format_double(cfg.training.yogi_tau_adapt) << "\n";
    o << "qfedavg_q = " << format_double(cfg.training.qfedavg_q) << "\n";
    o << "sampling_with_replacement = "
      << (cfg.training.sampling_with_replacement ? "true" : "false") << "\n";
    o << "\n[selection]\n";
    o << "kind = " << quoted(to_string(cfg.selection.kind)) << "\n";
    o << "explore_fraction = " << format_double(cfg.selection.explore_fraction) << "\n";
    o << "penalty_alpha = " << format_double(cfg.selection.penalty_alpha) << "\n";
    o << "deadline_s = " << format_double(cfg.selection.deadline_s) << "\n";
    o << "\n[time]\n";
    o << "model_bytes = " << format_double(cfg.time.model_bytes) << "\n";
    o << "round_deadline_s = " << format_double(cfg.time.round_deadline_s) << "\n";
    return o.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return rng::fnv1a(canonical_toml(cfg));
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
    // Route through the parser so overrides get the same syntax and checks.
    const std::size_t dot = dotted_key.find('.');
    if (dot == std::string::npos)
        throw InputError("override key must look like section.key: " + dotted_key);
    const std::string section = dotted_key.substr(0, dot);
    const std::string key = dotted_key.substr(dot + 1);
    const std::string snippet = "[" + section + "]\n" + key + " = " + value + "\n";

    RawConfig raw(snippet, "override");
    Reader r(raw);
    const std::string full = section + "." + key;

    bool matched = true;
    if (full == "run.name") r.get(full, cfg.run.name);
    else if (full == "run.seeds") r.get(full, cfg.run.seeds);
    else if (full == "run.output_dir") r.get(full, cfg.run.output_dir);
    else if (full == "run.checkpoint_every") r.get(full, cfg.run.checkpoint_every);
    else if (full == "policy.mode") r.get_enum(full, cfg.policy.mode, drift_mode_from_string);
    else if (full == "policy.tau_fraction") r.get(full, cfg.policy.tau_fraction);
    else if (full == "policy.pairwise_variant") r.get(full, cfg.policy.pairwise_variant);
    else if (full == "policy.initial_clusters") r.get(full, cfg.policy.initial_clusters);
    else if (full == "representation.kind") r.get(full, cfg.representation.kind);
    else if (full == "representation.metric")
        r.get_enum(full, cfg.representation.metric, metric_from_string);
    else if (full == "trace.malicious_fraction") r.get(full, cfg.trace.malicious_fraction);
    else if (full == "population.shared_level")
        r.get_enum(full, cfg.population.shared_level, shared_level_from_string);
    else if (full == "selection.kind")
        r.get_enum(full, cfg.selection.kind, selector_from_string);
    else if (full == "training.aggregation")
        r.get_enum(full, cfg.training.aggregation, aggregation_from_string);
    else matched = false;

    if (!matched) throw InputError("unsupported override key: " + dotted_key);
    if (!r.problems().empty())
        throw InputError("bad override value for " + dotted_key + ": " + r.problems()[0]);
}

}  // namespace cflsim
