#include "cli.hpp"

#include "vqann/bench.hpp"
#include "vqann/sparse.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <locale>
#include <sstream>

namespace vqann::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Relative dataset paths resolve against VQANN_DATA_DIR when it is set and
// the path does not exist as given.
fs::path dataset_path(const std::string& p) {
    fs::path path(p);
    if (path.is_relative() && !fs::exists(path)) {
        if (const char* root = std::getenv("VQANN_DATA_DIR"); root != nullptr && *root != '\0') {
            path = fs::path(root) / path;
        }
    }
    if (!fs::exists(path)) {
        throw UsageError("dataset not found: " + p);
    }
    return path;
}

Dataset load_dataset(const std::string& p) {
    const fs::path path = dataset_path(p);
    return read_vecs(path, element_kind_from_path(path));
}

std::string hex(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return hex(fnv1a64(bytes));
}

// A number, or "auto" (returned as nullopt).
std::optional<double> parse_auto(const std::string& text, const char* flag) {
    if (text == "auto") {
        return std::nullopt;
    }
    std::istringstream s(text);
    s.imbue(std::locale::classic());
    double v = 0.0;
    if (!(s >> v) || !s.eof() || !std::isfinite(v) || v < 0.0) {
        throw UsageError(std::string(flag) + " expects a nonnegative number or 'auto'");
    }
    return v;
}

bool power_of_two(std::size_t v) {
    return v != 0 && (v & (v - 1)) == 0;
}

// Resolves --m / --k / --bits with bits = M * log2 K.
void resolve_shape(std::size_t& m, std::size_t& k, std::size_t bits, bool m_set, bool k_set) {
    if (bits == 0) {
        return;
    }
    if (m_set && k_set) {
        if (!power_of_two(k) || m * index_bits(k) != bits) {
            throw UsageError("--bits disagrees with --m and --k");
        }
    } else if (k_set) {
        if (!power_of_two(k) || bits % index_bits(k) != 0) {
            throw UsageError("--bits must be a multiple of log2 K");
        }
        m = bits / index_bits(k);
    } else {
        if (bits % m != 0 || bits / m >= 32) {
            throw UsageError("--bits must be a multiple of M with at most 31 bits per index");
        }
        k = std::size_t{1} << (bits / m);
    }
    if (m == 0 || k < 1) {
        throw UsageError("--bits yields an empty code");
    }
}

bool uses_mu(Variant v) {
    return v == Variant::OCQ || v == Variant::NOCQ || v == Variant::SNOCQ;
}

json double_array(std::span<const double> v) {
    json a = json::array();
    for (const double x : v) {
        a.push_back(x);
    }
    return a;
}

std::string command_line(int argc, const char* const* argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        s += (i == 0 ? "" : " ") + std::string(argv[i]);
    }
    return s;
}

void write_manifest(const fs::path& path, const json& manifest) {
    std::ofstream f(path);
    f << manifest.dump(2) << '\n';
    if (!f) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
}

struct Options {
    // train
    std::string data;
    std::string variant;
    std::size_t m = 4;
    std::size_t k = 256;
    std::size_t bits = 0;
    std::string mu = "auto";
    std::string lambda = "0";
    std::size_t s_budget = 0;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
    std::size_t outer_iters = 30;
    std::size_t icm_sweeps = 1;
    std::string cq_update = "lbfgs";
    std::string codes_out;
    // encode / search / eval
    std::string model;
    std::string codes;
    std::string queries;
    std::string groundtruth;
    std::string base;
    std::size_t sweeps = 3;
    std::size_t r = 10;
    std::string mode = "adc";
    std::string map_out;
    // synth
    std::size_t n = 10000;
    std::size_t d = 32;
    std::size_t clusters = 16;
    double spread = 0.3;
    // bench
    std::string preset = "desk";
    std::size_t seeds = 0;
    bool multi_index = false;
};

int cmd_train(const Options& o, CLI::App& sub, int argc, const char* const* argv, std::ostream& out) {
    const Variant variant = parse_variant(o.variant);
    std::size_t m = o.m;
    std::size_t k = o.k;
    resolve_shape(m, k, o.bits, sub.count("--m") > 0, sub.count("--k") > 0);
    const std::optional<double> mu = parse_auto(uses_mu(variant) ? o.mu : std::string("0"), "--mu");
    const std::optional<double> lambda = parse_auto(o.lambda, "--lambda");
    if (o.cq_update != "lbfgs" && o.cq_update != "closed-form") {
        throw UsageError("--cq-update must be lbfgs or closed-form");
    }
    if (o.outer_iters < 1) {
        throw UsageError("--outer-iters must be at least 1");
    }
    const Dataset data = load_dataset(o.data);
    if (k > data.n()) {
        throw UsageError("K exceeds the number of vectors");
    }

    TrainConfig cfg;
    cfg.seed = o.seed;
    cfg.outer_iters = o.outer_iters;
    cfg.icm_sweeps = o.icm_sweeps;
    cfg.cq_update = o.cq_update == "lbfgs" ? DictionaryUpdate::lbfgs : DictionaryUpdate::closed_form;
    json selection = json::object();
    if (uses_mu(variant)) {
        if (mu) {
            cfg.mu = *mu;
        } else {
            const MuSelection sel = select_mu(variant, data, m, k, cfg);
            cfg.mu = sel.mu;
            selection["mu_grid"] = double_array(sel.grid);
            selection["mu_scores"] = double_array(sel.scores);
        }
    }

    TrainedQuantizer trained;
    SparseConfig sparse;
    if (variant == Variant::SNOCQ) {
        sparse.train = cfg;
        sparse.s_budget = o.s_budget;
        if (lambda) {
            sparse.lambda = *lambda;
        } else {
            const LambdaSelection sel = select_lambda(data, m, k, sparse);
            sparse.lambda = sel.lambda;
            selection["lambda_grid"] = double_array(sel.grid);
            selection["lambda_scores"] = double_array(sel.scores);
        }
        trained = train_snocq(data, m, k, sparse);
    } else {
        trained = train_variant(variant, data, m, k, cfg);
    }
    const QuantizerModel& model = trained.model;

    out << "iteration,objective\n";
    for (std::size_t i = 0; i < model.train_log.size(); ++i) {
        out << i << ',' << model.train_log[i] << '\n';
    }
    const fs::path model_path(o.out);
    save_model(model, model_path);
    if (!o.codes_out.empty()) {
        save_codes(trained.codes, k, o.codes_out);
    }

    const double error = quantization_error(model.codebooks, trained.codes, data);
    json manifest;
    manifest["command"] = command_line(argc, argv);
    manifest["seed"] = o.seed;
    manifest["config"] = {{"variant", variant_name(variant)},
                          {"m", m},
                          {"k", k},
                          {"bits", code_bits(m, k)},
                          {"mu", model.mu},
                          {"lambda", model.lambda},
                          {"s_budget", variant == Variant::SNOCQ ? (o.s_budget == 0 ? k * data.d() : o.s_budget) : 0},
                          {"outer_iters", o.outer_iters},
                          {"icm_sweeps", o.icm_sweeps},
                          {"cq_update", o.cq_update},
                          {"threads", o.threads},
                          {"selection", selection}};
    manifest["model_hash"] = file_hash(model_path);
    manifest["dataset_hashes"] = {{"data", file_hash(dataset_path(o.data))}};
    manifest["metrics"] = {{"quantization_error", error},
                           {"epsilon", model.epsilon},
                           {"iterations", model.train_log.empty() ? 0 : model.train_log.size() - 1},
                           {"final_objective", model.train_log.empty() ? error : model.train_log.back()},
                           {"nonzeros", model.codebooks.nonzeros()}};
    if (!o.codes_out.empty()) {
        manifest["codes_hash"] = file_hash(o.codes_out);
    }
    write_manifest(fs::path(o.out + ".json"), manifest);
    return 0;
}

int cmd_encode(const Options& o, std::ostream& out) {
    const QuantizerModel model = load_model(o.model);
    const Dataset data = load_dataset(o.data);
    if (data.d() != model.d()) {
        throw DimensionError("dataset dimension does not match the model");
    }
    const CodeSet codes = encode(model, data, o.sweeps);
    save_codes(codes, model.k(), o.out);
    out << "encoded " << codes.size() << " vectors, error " << quantization_error(model.codebooks, codes, data)
        << '\n';
    return 0;
}

struct Loaded {
    QuantizerModel model;
    CodeSet codes;
    Dataset queries;
};

Loaded load_for_query(const Options& o) {
    Loaded l;
    l.model = load_model(o.model);
    std::size_t k = 0;
    l.codes = load_codes(o.codes, &k);
    if (l.codes.m != l.model.m() || k != l.model.k()) {
        throw DimensionError("codes do not match the model's M and K");
    }
    l.queries = load_dataset(o.queries);
    if (l.queries.d() != l.model.d()) {
        throw DimensionError("query dimension does not match the model");
    }
    return l;
}

std::vector<SearchResult> run_queries(const Loaded& l, const std::string& mode, std::size_t r) {
    if (mode == "adc") {
        return search_all(l.model, l.queries, l.codes, r);
    }
    std::vector<SearchResult> results(l.queries.n());
    std::vector<double> deltas;
    if (mode == "exact" || mode == "nodelta") {
        deltas = stored_deltas(l.model, l.codes);
    }
    for (std::size_t q = 0; q < l.queries.n(); ++q) {
        const auto query = l.queries.row(q);
        if (mode == "exact" || mode == "nodelta") {
            results[q] = reconstruction_scan(l.model, query, l.codes, deltas, r, mode == "exact");
        } else if (mode == "ip") {
            results[q] = inner_product_scan(l.model, query, l.codes, r);
        } else if (mode == "compressed") {
            results[q] = compressed_query_search(l.model, query, l.codes, r);
        } else {
            throw UsageError("unknown --mode " + mode);
        }
    }
    return results;
}

int cmd_search(const Options& o, std::ostream& out) {
    const Loaded l = load_for_query(o);
    const auto results = run_queries(l, o.mode, o.r);
    std::ofstream file;
    std::ostream& dst = o.out.empty() ? out : (file.open(o.out), file);
    dst.imbue(std::locale::classic());
    dst << std::setprecision(17) << "query,rank,id,score\n";
    bool clipped = false;
    for (std::size_t q = 0; q < results.size(); ++q) {
        clipped = clipped || results[q].clipped;
        for (std::size_t i = 0; i < results[q].ids.size(); ++i) {
            dst << q << ',' << i << ',' << results[q].ids[i] << ',' << results[q].scores[i] << '\n';
        }
    }
    if (clipped) {
        std::cerr << "warning: R exceeds the corpus size; results clipped\n";
    }
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const Loaded l = load_for_query(o);
    GroundTruth truth;
    if (!o.groundtruth.empty()) {
        truth = read_groundtruth(dataset_path(o.groundtruth));
    } else if (!o.base.empty()) {
        const Dataset base = load_dataset(o.base);
        if (base.n() != l.codes.size()) {
            throw DimensionError("base set size does not match the codes");
        }
        truth = brute_force_groundtruth(base, l.queries, std::min<std::size_t>(100, base.n()));
    } else {
        throw UsageError("eval needs --groundtruth or --base");
    }
    if (truth.queries != l.queries.n()) {
        throw DimensionError("ground truth rows do not match the queries");
    }
    const bool want_map = !o.map_out.empty();
    const std::size_t depth = want_map ? l.codes.size() : std::min<std::size_t>(100, l.codes.size());
    const auto results = run_queries(l, o.mode, depth);
    const std::string method(variant_name(l.model.variant));
    const std::size_t bits = code_bits(l.model.m(), l.model.k());

    std::ofstream file;
    std::ostream& dst = o.out.empty() ? out : (file.open(o.out), file);
    dst.imbue(std::locale::classic());
    dst << std::setprecision(10) << "method,bits,T,R,recall\n";
    for (const std::size_t t : {1, 10, 50}) {
        if (t > truth.width) {
            continue;
        }
        for (const std::size_t r : bench_recall_cutoffs()) {
            if (r > depth) {
                continue;
            }
            dst << method << ',' << bits << ',' << t << ',' << r << ',' << recall_at_r(results, truth, t, r)
                << '\n';
        }
    }
    if (want_map) {
        std::ofstream map(o.map_out);
        map.imbue(std::locale::classic());
        map << std::setprecision(10) << "method,bits,MAP\n"
            << method << ',' << bits << ','
            << mean_average_precision(results, truth, std::min<std::size_t>(100, truth.width)) << '\n';
        if (!map) {
            throw std::runtime_error("cannot write " + o.map_out);
        }
    }
    return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
    if (o.clusters < 1 || o.clusters > o.n) {
        throw UsageError("--clusters must be in [1, n]");
    }
    const Dataset data = synth_mixture(o.n, o.d, o.clusters, o.spread, o.seed);
    write_vecs(data, o.out, element_kind_from_path(o.out));
    out << "wrote " << data.n() << " x " << data.d() << " to " << o.out << '\n';
    return 0;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
    BenchConfig cfg;
    if (o.preset == "desk") {
        cfg = desk_preset();
    } else if (o.preset == "smoke") {
        cfg = smoke_preset();
    } else {
        throw UsageError("unknown preset " + o.preset);
    }
    if (o.seeds > 0) {
        cfg.seeds.resize(o.seeds);
        for (std::size_t i = 0; i < o.seeds; ++i) {
            cfg.seeds[i] = i + 1;
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    const BenchReport report = run_bench(cfg, &err);
    std::ofstream file;
    std::ostream& dst = o.out.empty() ? out : (file.open(o.out), file);
    dst.imbue(std::locale::classic());
    write_bench_report(report, dst);
    if (o.multi_index) {
        const Variant fine[] = {Variant::PQ, Variant::NOCQ};
        const std::size_t lengths[] = {100, 1000, 4000};
        const auto rows = run_multi_index_bench(cfg, 16, fine, lengths, &err);
        dst << "\n# multi-index (coarse K=16, T=1, R=10, mean over seeds)\nfine,L,recall\n";
        for (const auto& row : rows) {
            dst << variant_name(row.fine_variant) << ',' << row.list_length << ',' << row.recall_at_10 << '\n';
        }
    }
    err << "bench finished in " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
        << " s\n";
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    out.imbue(std::locale::classic());
    CLI::App app{"Compact codes for approximate nearest neighbor search"};
    app.require_subcommand(1);
    Options o;

    auto add_shape = [&](CLI::App* s) {
        s->add_option("--variant", o.variant, "pq, ckm, cq, ocq, nocq or snocq")->required();
        s->add_option("--m", o.m, "Dictionaries")->check(CLI::PositiveNumber);
        s->add_option("--k", o.k, "Elements per dictionary")->check(CLI::PositiveNumber);
        s->add_option("--bits", o.bits, "Code length; bits = M * log2 K")->check(CLI::PositiveNumber);
    };
    auto add_threads = [&](CLI::App* s) {
        s->add_option("--threads", o.threads, "Worker threads; 1 is the reproducible reference")
            ->check(CLI::NonNegativeNumber);
    };

    CLI::App* train = app.add_subcommand("train", "Train a quantizer");
    train->add_option("--data", o.data, "Base vectors (fvecs, bvecs or ivecs)")->required();
    add_shape(train);
    train->add_option("--mu", o.mu, "Penalty weight or 'auto'");
    train->add_option("--lambda", o.lambda, "L1 weight for snocq or 'auto'");
    train->add_option("--s-budget", o.s_budget, "Nonzero budget for snocq; 0 means K*D");
    train->add_option("--seed", o.seed, "Root seed");
    add_threads(train);
    train->add_option("--out", o.out, "Model file")->required();
    train->add_option("--codes-out", o.codes_out, "Also write the training codes");
    train->add_option("--outer-iters", o.outer_iters, "Alternation count");
    train->add_option("--icm-sweeps", o.icm_sweeps, "ICM sweeps per alternation")->check(CLI::PositiveNumber);
    train->add_option("--cq-update", o.cq_update, "lbfgs or closed-form");

    CLI::App* enc = app.add_subcommand("encode", "Encode vectors with a trained model");
    enc->add_option("--model", o.model)->required();
    enc->add_option("--data", o.data)->required();
    enc->add_option("--out", o.out, "Codes file")->required();
    enc->add_option("--sweeps", o.sweeps, "ICM sweeps")->check(CLI::PositiveNumber);
    add_threads(enc);

    auto add_query = [&](CLI::App* s) {
        s->add_option("--model", o.model)->required();
        s->add_option("--codes", o.codes)->required();
        s->add_option("--queries", o.queries)->required();
        s->add_option("--mode", o.mode, "adc, exact, nodelta, ip or compressed");
        s->add_option("--out", o.out, "CSV output; stdout when omitted");
        add_threads(s);
    };
    CLI::App* search = app.add_subcommand("search", "Top-R search");
    add_query(search);
    search->add_option("--r", o.r, "Results per query")->check(CLI::PositiveNumber);

    CLI::App* eval = app.add_subcommand("eval", "Recall@R and MAP");
    add_query(eval);
    eval->add_option("--groundtruth", o.groundtruth, "ivecs ground truth");
    eval->add_option("--base", o.base, "Base vectors for brute-force ground truth");
    eval->add_option("--map-out", o.map_out, "Also write MAP as CSV here");

    CLI::App* synth = app.add_subcommand("synth", "Write a synthetic Gaussian mixture");
    synth->add_option("--n", o.n)->check(CLI::PositiveNumber);
    synth->add_option("--d", o.d)->check(CLI::PositiveNumber);
    synth->add_option("--clusters", o.clusters)->check(CLI::PositiveNumber);
    synth->add_option("--spread", o.spread)->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", o.seed);
    synth->add_option("--out", o.out)->required();

    CLI::App* bench = app.add_subcommand("bench", "Desk-scale comparison of all variants");
    bench->add_option("--preset", o.preset, "desk or smoke");
    bench->add_option("--seeds", o.seeds, "Number of seeds, 1..n");
    bench->add_option("--out", o.out, "Report file; stdout when omitted");
    bench->add_flag("--multi-index", o.multi_index, "Also compare multi-index fine variants");
    add_threads(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        const ThreadScope scope(o.threads);
        if (*train) {
            return cmd_train(o, *train, argc, argv, out);
        }
        if (*enc) {
            return cmd_encode(o, out);
        }
        if (*search) {
            return cmd_search(o, out);
        }
        if (*eval) {
            return cmd_eval(o, out);
        }
        if (*synth) {
            return cmd_synth(o, out);
        }
        return cmd_bench(o, out, err);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace vqann::cli
