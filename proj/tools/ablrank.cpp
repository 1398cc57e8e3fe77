// ablrank: decide whether a knowledge base can supervise a perception model,
// and run the training experiments that check the answer.

#include "ablrank/datagen.hpp"
#include "ablrank/diagnostics.hpp"
#include "ablrank/kb.hpp"
#include "ablrank/learner.hpp"
#include "ablrank/probmatrix.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace ablrank;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInsufficient = 2;

struct Globals {
    std::uint64_t seed = 0;
    std::string out;
    std::string format;
    bool no_timing = false;
};

struct KbSource {
    std::string path;
    std::string builtin;
    int base = 10;
    std::string concepts;
    std::string prior = "uniform";

    void add_to(CLI::App* cmd) {
        auto* kb = cmd->add_option("--kb", path, "Knowledge base file");
        auto* bi = cmd->add_option("--builtin", builtin, "conj_eq | conjunction | addition | hed");
        kb->excludes(bi);
        cmd->add_option("--base", base, "Numeral base for addition and hed")->capture_default_str();
        cmd->add_option("--concepts", concepts, "Comma-separated concept ids to keep");
        cmd->add_option("--prior", prior, "uniform, a file, or inline p0,p1,...")->capture_default_str();
    }

    std::string id() const {
        std::string s;
        if (!builtin.empty()) {
            s = builtin;
            if (builtin == "addition" || builtin == "hed") s += std::to_string(base);
        } else {
            s = std::filesystem::path(path).stem().string();
        }
        if (!concepts.empty()) s += "[" + concepts + "]";
        return s;
    }

    KnowledgeBase load() const {
        KnowledgeBase kb;
        if (!builtin.empty()) {
            auto kind = builtin_kind_from_name(builtin);
            if (!kind) throw Error("unknown builtin '" + builtin + "'");
            kb = builtin_kb(*kind, base);
        } else if (!path.empty()) {
            std::ifstream is(path);
            if (!is) throw Error("cannot open '" + path + "'");
            std::stringstream ss;
            ss << is.rdbuf();
            try {
                kb = parse_kb(ss.str());
            } catch (const KbParseError& e) {
                throw Error(path + ":" + e.what());
            }
        } else {
            throw Error("one of --kb or --builtin is required");
        }
        kb = ground(std::move(kb));
        if (!concepts.empty()) {
            std::vector<std::string> ids;
            std::stringstream ss(concepts);
            for (std::string id; std::getline(ss, id, ',');) ids.push_back(id);
            kb = ground(select_concepts(kb, ids));
        }
        return kb;
    }

    ClassPrior load_prior(int classes) const {
        if (prior == "uniform") return ClassPrior::uniform(classes);
        std::string text = prior;
        if (std::filesystem::is_regular_file(prior)) {
            std::ifstream is(prior);
            std::stringstream ss;
            ss << is.rdbuf();
            text = ss.str();
            for (char& ch : text) {
                if (ch == '\n' || ch == '\r') ch = ' ';
            }
        }
        auto p = ClassPrior::parse(text);
        if (p.num_classes() != classes) {
            throw Error("prior has " + std::to_string(p.num_classes()) + " entries, KB has " + std::to_string(classes) +
                        " classes");
        }
        return p;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (!builtin.empty()) {
            j["builtin"] = builtin;
            j["base"] = base;
        } else {
            j["kb"] = path;
        }
        if (!concepts.empty()) j["concepts"] = concepts;
        j["prior"] = prior;
        return j;
    }
};

struct TrainFlags {
    std::string method = "tl";
    int epochs = 100;
    int batch = 256;
    double lr = 1e-3;
    std::size_t n_train = 10'000;
    std::size_t n_test = 2'000;
    std::string arch = "linear";
    int hidden = 64;
    std::string activation = "relu";
    double sep = 3.0;
    double sigma = 1.0;

    void add_to(CLI::App* cmd, bool with_method) {
        if (with_method) cmd->add_option("--method", method, "rand | maxp | mind | avg | tl")->capture_default_str();
        cmd->add_option("--epochs", epochs)->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--batch", batch)->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--lr", lr)->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--n-train", n_train, "Training sequences")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--n-test", n_test, "Test sequences")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--arch", arch, "linear | mlp")->capture_default_str();
        cmd->add_option("--hidden", hidden)->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--activation", activation, "relu | tanh")->capture_default_str();
        cmd->add_option("--sep", sep, "Distance of class means from the origin")->capture_default_str();
        cmd->add_option("--sigma", sigma, "Feature noise")->capture_default_str();
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig cfg;
        cfg.method = method_from_name(method);
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.adam.lr = lr;
        cfg.seed = seed;
        if (arch == "linear") {
            cfg.arch = ArchSpec::linear();
        } else if (arch == "mlp") {
            Activation act;
            if (activation == "relu") {
                act = Activation::Relu;
            } else if (activation == "tanh") {
                act = Activation::Tanh;
            } else {
                throw Error("unknown activation '" + activation + "'");
            }
            cfg.arch = ArchSpec::mlp(hidden, act);
        } else {
            throw Error("unknown architecture '" + arch + "'");
        }
        cfg.validate();
        return cfg;
    }

    FeatureParams features() const {
        if (!(sigma > 0)) throw Error("--sigma must be positive");
        return {sep, sigma};
    }
};

std::string resolve_format(const Globals& g, const std::string& fallback, std::initializer_list<const char*> allowed) {
    std::string f = g.format.empty() ? fallback : g.format;
    for (const char* a : allowed) {
        if (f == a) return f;
    }
    throw Error("format '" + f + "' is not available for this command");
}

void emit(const Globals& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        std::cout.flush();
        return;
    }
    std::ofstream os(g.out, std::ios::binary);
    if (!os) throw Error("cannot open '" + g.out + "' for writing");
    os << text;
    if (!text.empty() && text.back() != '\n') os << '\n';
    if (!os) throw Error("failed to write '" + g.out + "'");
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::vector<int> parse_bases(const std::string& spec) {
    std::vector<int> out;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) {
        auto dash = part.find('-');
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stoi(part));
            } else {
                int lo = std::stoi(part.substr(0, dash)), hi = std::stoi(part.substr(dash + 1));
                for (int b = lo; b <= hi; ++b) out.push_back(b);
            }
        } catch (const std::logic_error&) {
            throw Error("malformed base list '" + spec + "'");
        }
    }
    if (out.empty()) throw Error("empty base list");
    return out;
}

std::vector<Method> parse_methods(const std::string& spec) {
    std::vector<Method> out;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(method_from_name(part));
    if (out.empty()) throw Error("empty method list");
    return out;
}

int cmd_diagnose(const Globals& g, const KbSource& src) {
    auto kb = src.load();
    auto report = diagnose(kb, src.load_prior(kb.num_classes()), src.id());
    auto fmt = resolve_format(g, "json", {"json", "text"});
    if (fmt == "json") {
        auto j = to_json(report);
        j["config"] = src.to_json();
        emit(g, dump(j));
    } else {
        emit(g, to_text(report));
    }
    return report.full_row_rank ? kExitOk : kExitInsufficient;
}

int cmd_gen_kb(const Globals& g, const std::string& form, int arity) {
    NormalForm nf;
    if (form == "dnf") {
        nf = NormalForm::Dnf;
    } else if (form == "cnf") {
        nf = NormalForm::Cnf;
    } else {
        throw Error("unknown form '" + form + "' (expected dnf or cnf)");
    }
    auto kb = random_kb(nf, arity, g.seed);
    auto fmt = resolve_format(g, "kb", {"kb", "json"});
    if (fmt == "kb") {
        std::string header = "# random " + form + " knowledge base, arity " + std::to_string(arity) + ", seed " +
                             std::to_string(g.seed) + "\n";
        emit(g, header + render_kb(kb));
    } else {
        auto j = grounded_to_json(ground(kb));
        j["config"] = {{"form", form}, {"arity", arity}, {"seed", g.seed}};
        emit(g, dump(j));
    }
    return kExitOk;
}

int cmd_gen_data(const Globals& g, const KbSource& src, const std::string& mode, std::size_t n, double sep,
                 double sigma) {
    auto kb = src.load();
    auto prior = src.load_prior(kb.num_classes());
    if (!(sigma > 0)) throw Error("--sigma must be positive");
    FeatureParams fp{sep, sigma};
    auto data = make_dataset(kb, mode_from_name(mode), prior, fp.model_for(kb.num_classes()), n, g.seed);
    std::ostringstream os;
    write_dataset(os, data, kb);
    emit(g, os.str());
    return kExitOk;
}

int cmd_train(const Globals& g, const KbSource& src, const TrainFlags& flags, const std::string& data_path) {
    auto kb = src.load();
    auto prior = src.load_prior(kb.num_classes());
    auto cfg = flags.config(g.seed);
    auto features = flags.features();
    RecoveryResult result;
    if (data_path.empty()) {
        result = recovery_experiment(kb, prior, cfg, flags.n_train, flags.n_test, features, src.id());
    } else {
        auto train_set = read_dataset_file(data_path, kb);
        result.diagnosis = diagnose(kb, train_set.prior, src.id());
        auto model = FeatureModel::standard(kb.num_classes(), features.sep, features.sigma);
        if (model.dim != train_set.dim) throw Error("dataset dimension does not match the feature model");
        auto test_set = make_dataset(kb, SamplingMode::Generative, train_set.prior, model, flags.n_test,
                                     derive_seed(g.seed, 0x74657374ULL));
        auto test = labeled_instances(test_set);
        result.train = train(kb, TrainingView(train_set), &result.diagnosis.matrix, cfg, &test);
    }
    auto fmt = resolve_format(g, "json", {"json", "text"});
    if (fmt == "json") {
        auto j = result.train.to_json(!g.no_timing);
        j["kb_id"] = result.diagnosis.kb_id;
        j["rank"] = result.diagnosis.rank;
        j["full_row_rank"] = result.diagnosis.full_row_rank;
        j["verdict"] = verdict_name(result.diagnosis.verdict);
        auto run = src.to_json();
        run["n_train"] = flags.n_train;
        run["n_test"] = flags.n_test;
        run["sep"] = features.sep;
        run["sigma"] = features.sigma;
        if (!data_path.empty()) run["data"] = data_path;
        j["run"] = std::move(run);
        emit(g, dump(j));
    } else {
        std::ostringstream os;
        os << "kb: " << result.diagnosis.kb_id << " (rank " << result.diagnosis.rank << "/" << result.diagnosis.classes
           << ", " << verdict_name(result.diagnosis.verdict) << ")\n";
        os << "method: " << method_name(cfg.method) << ", epochs " << cfg.epochs << ", seed " << cfg.seed << "\n";
        os << "final loss: " << (result.train.loss_curve.empty() ? 0.0 : result.train.loss_curve.back()) << "\n";
        os << "accuracy: " << result.train.final_accuracy << "\n";
        if (result.train.perm_max_accuracy) os << "permutation-max accuracy: " << *result.train.perm_max_accuracy << "\n";
        emit(g, os.str());
    }
    return kExitOk;
}

int cmd_verify_bound(const Globals& g, const KbSource& src, int trials, std::size_t n, double tolerance, double sep,
                     double sigma) {
    auto kb = src.load();
    auto prior = src.load_prior(kb.num_classes());
    if (!(sigma > 0)) throw Error("--sigma must be positive");
    auto res = verify_bound(kb, prior, n, trials, g.seed, src.id(), FeatureParams{sep, sigma}, tolerance);
    auto fmt = resolve_format(g, "json", {"json", "text"});
    if (fmt == "json") {
        auto j = res.to_json();
        auto cfg = src.to_json();
        cfg["trials"] = trials;
        cfg["seed"] = g.seed;
        cfg["sep"] = sep;
        cfg["sigma"] = sigma;
        j["config"] = std::move(cfg);
        emit(g, dump(j));
    } else {
        std::ostringstream os;
        os << "kb: " << res.kb_id << " (" << (res.mode == BoundMode::Location ? "L" : "TL") << "-risk bound, C = " << res.c
           << ")\n";
        os << "classifiers: " << res.records.size() << ", n = " << res.n << "\n";
        os << "violations: " << res.violations << " at tolerance " << res.tolerance << "\n";
        os << "tightness slack: " << res.tightness.slack << "\n";
        emit(g, os.str());
    }
    return kExitOk;
}

int emit_sweep(const Globals& g, const SweepResult& res, nlohmann::json config) {
    auto fmt = resolve_format(g, "csv", {"csv", "json"});
    if (fmt == "csv") {
        emit(g, res.to_csv(!g.no_timing));
    } else {
        auto j = res.to_json(!g.no_timing);
        j["config"] = std::move(config);
        emit(g, dump(j));
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank diagnostics for knowledge-base supervision"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Root seed")->capture_default_str();
    app.add_option("-o,--out", g.out, "Output file (default stdout)");
    app.add_option("--format", g.format, "json | csv | text | kb, depending on the command");
    app.add_flag("--no-timing", g.no_timing, "Report wall-clock fields as 0");

    KbSource diag_src;
    auto* diag = app.add_subcommand("diagnose", "Build Q or Q-tilde and test the rank criterion");
    diag_src.add_to(diag);

    std::string form = "dnf";
    int arity = 3;
    auto* gen_kb = app.add_subcommand("gen-kb", "Random DNF/CNF knowledge base");
    gen_kb->add_option("--form", form, "dnf | cnf")->capture_default_str();
    gen_kb->add_option("--arity", arity)->capture_default_str()->check(CLI::Range(2, 20));

    KbSource data_src;
    std::string mode = "generative";
    std::size_t n_data = 1000;
    double data_sep = 3.0, data_sigma = 1.0;
    auto* gen_data = app.add_subcommand("gen-data", "Synthetic sequence dataset (JSON lines)");
    data_src.add_to(gen_data);
    gen_data->add_option("--mode", mode, "uniform | generative")->capture_default_str();
    gen_data->add_option("-n,--n", n_data, "Number of sequences")->capture_default_str()->check(CLI::PositiveNumber);
    gen_data->add_option("--sep", data_sep)->capture_default_str();
    gen_data->add_option("--sigma", data_sigma)->capture_default_str();

    KbSource train_src;
    TrainFlags train_flags;
    std::string data_path;
    auto* train_cmd = app.add_subcommand("train", "Train on synthetic data and report test accuracy");
    train_src.add_to(train_cmd);
    train_flags.add_to(train_cmd, true);
    train_cmd->add_option("--data", data_path, "Training set written by gen-data");

    KbSource bound_src;
    int trials = 100;
    std::size_t bound_n = 20'000;
    double tolerance = 0.02, bound_sep = 3.0, bound_sigma = 1.0;
    auto* bound = app.add_subcommand("verify-bound", "Monte-Carlo check of the risk bounds");
    bound_src.add_to(bound);
    bound->add_option("--trials", trials, "Random classifiers")->capture_default_str()->check(CLI::PositiveNumber);
    bound->add_option("-n,--n", bound_n, "Sequences")->capture_default_str()->check(CLI::PositiveNumber);
    bound->add_option("--tolerance", tolerance)->capture_default_str();
    bound->add_option("--sep", bound_sep)->capture_default_str();
    bound->add_option("--sigma", bound_sigma)->capture_default_str();

    TrainFlags rand_flags;
    std::string rand_form = "dnf", methods = "tl";
    int rand_arity = 3, num_kbs = 40;
    unsigned rand_threads = 1;
    auto* sweep_random = app.add_subcommand("sweep-random", "Random-KB sweep grouped by the rank verdict");
    sweep_random->add_option("--form", rand_form, "dnf | cnf")->capture_default_str();
    sweep_random->add_option("--arity", rand_arity)->capture_default_str()->check(CLI::Range(3, 5));
    sweep_random->add_option("--num-kbs", num_kbs)->capture_default_str()->check(CLI::PositiveNumber);
    sweep_random->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
    sweep_random->add_option("--threads", rand_threads, "0 uses every core")->capture_default_str();
    rand_flags.add_to(sweep_random, false);

    TrainFlags hed_flags;
    std::string bases = "2-10";
    unsigned hed_threads = 1;
    auto* sweep_hed = app.add_subcommand("sweep-hed", "Rank and TL accuracy across numeral bases");
    sweep_hed->add_option("--bases", bases, "e.g. 2-10 or 2,5,10")->capture_default_str();
    sweep_hed->add_option("--threads", hed_threads, "0 uses every core")->capture_default_str();
    hed_flags.add_to(sweep_hed, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*diag) return cmd_diagnose(g, diag_src);
        if (*gen_kb) return cmd_gen_kb(g, form, arity);
        if (*gen_data) return cmd_gen_data(g, data_src, mode, n_data, data_sep, data_sigma);
        if (*train_cmd) return cmd_train(g, train_src, train_flags, data_path);
        if (*bound) return cmd_verify_bound(g, bound_src, trials, bound_n, tolerance, bound_sep, bound_sigma);
        if (*sweep_random) {
            NormalForm nf = rand_form == "dnf" ? NormalForm::Dnf
                            : rand_form == "cnf" ? NormalForm::Cnf
                                                 : throw Error("unknown form '" + rand_form + "'");
            SweepOptions opt;
            opt.train = rand_flags.config(g.seed);
            opt.n_train = rand_flags.n_train;
            opt.n_test = rand_flags.n_test;
            opt.features = rand_flags.features();
            opt.threads = rand_threads;
            auto res = random_kb_sweep(nf, rand_arity, num_kbs, parse_methods(methods), opt, g.seed);
            auto cfg = opt.train.to_json();
            cfg.erase("method");
            cfg["form"] = rand_form;
            cfg["arity"] = rand_arity;
            cfg["num_kbs"] = num_kbs;
            cfg["methods"] = methods;
            cfg["n_train"] = opt.n_train;
            cfg["n_test"] = opt.n_test;
            cfg["seed"] = g.seed;
            return emit_sweep(g, res, cfg);
        }
        if (*sweep_hed) {
            SweepOptions opt;
            opt.train = hed_flags.config(g.seed);
            opt.n_train = hed_flags.n_train;
            opt.n_test = hed_flags.n_test;
            opt.features = hed_flags.features();
            opt.threads = hed_threads;
            auto res = hed_base_sweep(parse_bases(bases), opt, g.seed);
            auto cfg = opt.train.to_json();
            cfg["bases"] = bases;
            cfg["n_train"] = opt.n_train;
            cfg["n_test"] = opt.n_test;
            cfg["seed"] = g.seed;
            return emit_sweep(g, res, cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
