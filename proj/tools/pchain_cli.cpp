#include <pchain/fluid.hpp>
#include <pchain/gossip.hpp>
#include <pchain/scenario.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace pchain;

namespace {

constexpr std::uint64_t default_seed = 20240601;
constexpr int exit_ok = 0;
constexpr int exit_assertion = 1;
constexpr int exit_usage = 2;

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::string header(std::uint64_t seed, const std::string& hash)
{
    std::ostringstream out;
    out << "# version=" << pchain_version << " seed=" << seed << " config_hash=" << hash;
    return out.str();
}

std::string text_hash(const std::string& text)
{
    return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())).hex().substr(0, 16);
}

fs::path output_dir(const std::string& flag)
{
    fs::path dir = flag;
    if (dir.empty()) {
        const char* env = std::getenv("PCHAIN_OUT_DIR");
        dir = env && *env ? env : "out";
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw UsageError("cannot write " + path.string());
    return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback, const char* source)
{
    if (flag)
        return *flag;
    std::cout << "seed: " << fallback << " (" << source << ")\n";
    return fallback;
}

struct RunArgs
{
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool no_log = false;
    std::optional<std::int64_t> clock_skew_ms;
};

int cmd_run(const RunArgs& a)
{
    if (!fs::exists(a.scenario))
        throw UsageError("scenario file not found: " + a.scenario);
    Scenario s;
    try {
        s = load_scenario(a.scenario);
    } catch (const ScenarioError& e) {
        throw UsageError(e.what());
    }
    const auto seed = resolve_seed(a.seed, s.seed, "scenario default");
    const auto dir = output_dir(a.out);
    const auto stem = dir / s.name;

    RunOptions opt;
    opt.seed = seed;
    if (a.clock_skew_ms)
        opt.clock_skew = *a.clock_skew_ms * ms;
    std::ofstream log;
    if (!a.no_log) {
        log = open_out(stem.string() + ".events.jsonl");
        opt.log_out = &log;
    }
    const auto report = run_scenario(s, opt);

    auto json_out = open_out(stem.string() + ".report.json");
    auto j = report.to_json();
    json_out << j.dump(2) << '\n';
    auto csv = open_out(stem.string() + ".metrics.csv");
    csv << report.metrics_csv();

    std::cout << report.name << ": seed=" << seed << " config_hash=" << report.config_hash
              << " log_digest=" << report.log_digest.hex().substr(0, 16) << '\n';
    for (const auto& key : {"submitted", "accepted_all", "rejected", "invalid_accepted", "dual_accepted_pairs",
                            "conservation_ok"}) {
        if (auto it = report.metrics.find(key); it != report.metrics.end())
            std::cout << "  " << key << " = " << it->second << '\n';
    }
    if (auto it = report.metrics.find("invalid_submitted"); it != report.metrics.end() && it->second > 0)
        std::cout << "  " << report.metrics.at("invalid_accepted") << " invalid accepted of " << it->second << '\n';
    std::cout << "  report: " << stem.string() << ".report.json\n";

    int failed = 0;
    for (const auto& r : report.assertions) {
        if (r.passed)
            continue;
        ++failed;
        std::cerr << "assertion failed: " << r.assertion.metric << ' ' << r.assertion.op << ' ' << r.assertion.value
                  << "\n  expected: " << r.assertion.metric << ' ' << r.assertion.op << ' ' << r.assertion.value
                  << "\n  actual:   " << (r.actual ? std::to_string(*r.actual) : std::string("metric missing")) << '\n';
    }
    std::cout << (failed ? "FAILED" : "PASSED") << " (" << report.assertions.size() - failed << '/'
              << report.assertions.size() << " assertions)\n";
    return failed ? exit_assertion : exit_ok;
}

struct GossipArgs
{
    std::size_t n = 1000;
    double beta = 0.5;
    std::size_t fanout = 3;
    std::size_t w0 = 10;
    std::size_t runs = 100;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::size_t> sweep;
    double dt = 0.1;
};

int cmd_gossip(const GossipArgs& a)
{
    GossipParams p;
    p.n = a.n;
    p.beta = a.beta;
    p.fanout = a.fanout;
    p.w0_count = a.w0;
    try {
        check_params(p);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (a.runs == 0)
        throw UsageError("--runs must be at least 1");
    const auto seed = resolve_seed(a.seed, default_seed, "default");
    const auto dir = output_dir(a.out);
    GossipOptions opt;
    opt.sample_dt = a.dt;

    std::ostringstream cfg;
    cfg << "gossip n=" << a.n << " beta=" << a.beta << " fanout=" << a.fanout << " w0=" << a.w0 << " runs=" << a.runs
        << " dt=" << a.dt;
    auto rng = RngStream::derive(seed, "gossip-validate");
    const auto curve = mean_curve(p, a.runs, rng, opt);
    const auto path = dir / "gossip.csv";
    auto out = open_out(path);
    out << header(seed, text_hash(cfg.str())) << '\n';
    write_coverage_csv(out, curve, p);
    const auto dev = max_deviation(curve, p, p.w0(), 0.9);
    std::cout << "mean of " << a.runs << " runs: max |w - analytic| over [w0, 0.9] = " << dev << '\n';
    try {
        std::cout << "fitted early growth rate = " << fit_growth_rate(curve) << " (beta*f = " << p.rate() << ")\n";
    } catch (const FitError& e) {
        std::cout << "fitted early growth rate unavailable: " << e.what() << '\n';
    }
    std::cout << "curve: " << path.string() << '\n';

    if (!a.sweep.empty()) {
        std::ostringstream sweep_cfg;
        sweep_cfg << cfg.str() << " sweep=";
        for (auto f : a.sweep)
            sweep_cfg << f << ';';
        const auto sweep_path = dir / "gossip_sweep.csv";
        auto s = open_out(sweep_path);
        s << header(seed, text_hash(sweep_cfg.str())) << '\n';
        s << "fanout,beta_f,t63_empirical,t63_analytic\n";
        const double target = 1.0 - std::exp(-1.0);
        for (auto f : a.sweep) {
            auto q = p;
            q.fanout = f;
            try {
                check_params(q);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            auto r = RngStream::derive(seed, "gossip-sweep", f);
            const auto c = mean_curve(q, a.runs, r, opt);
            const double t_emp = time_to_fraction(c, target);
            // Logistic inverse: t = ln(w(1-w0) / (w0(1-w))) / r.
            const double w0 = q.w0();
            const double t_an = std::log(target * (1 - w0) / (w0 * (1 - target))) / q.rate();
            s << f << ',' << q.rate() << ',' << t_emp << ',' << t_an << '\n';
            std::cout << "fanout " << f << ": time to 63% coverage = " << t_emp << " (analytic " << t_an << ")\n";
        }
        std::cout << "sweep: " << sweep_path.string() << '\n';
    }
    return exit_ok;
}

struct CommunityArgs
{
    std::string graph;
    std::size_t k = 2;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_communities(const CommunityArgs& a)
{
    std::ifstream in(a.graph);
    if (!in)
        throw UsageError("graph file not found: " + a.graph);
    Graph g;
    try {
        g = read_edge_list(in);
    } catch (const std::runtime_error& e) {
        throw UsageError(std::string("bad graph file: ") + e.what());
    }
    if (a.k < 1 || a.k > g.node_count())
        throw UsageError("--k must lie in [1, node count]");
    const auto seed = resolve_seed(a.seed, default_seed, "default");
    const auto dir = output_dir(a.out);
    auto rng = RngStream::derive(seed, "communities");
    const auto assignment = detect_communities(g, a.k, rng);

    std::ostringstream cfg;
    write_edge_list(cfg, g);
    cfg << "k=" << a.k;
    const auto path = dir / (fs::path(a.graph).stem().string() + ".communities.txt");
    auto out = open_out(path);
    out << header(seed, text_hash(cfg.str())) << '\n';
    write_assignment(out, assignment);

    const auto sizes = assignment.sizes();
    std::cout << "k=" << a.k << " supersteps=" << assignment.supersteps
              << " converged=" << (assignment.converged ? "true" : "false") << " sizes=";
    for (std::size_t i = 0; i < sizes.size(); ++i)
        std::cout << (i ? "," : "") << sizes[i];
    std::cout << "\nassignment: " << path.string() << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pchain: parallel-chains ledger and consensus simulator"};
    app.set_version_flag("--version", std::string(pchain_version));
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario file and write its report");
    run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file")->required();
    run_cmd->add_option("--seed", run.seed, "Master seed (default: the scenario's seed)");
    run_cmd->add_option("--out", run.out, "Output directory (default: $PCHAIN_OUT_DIR or ./out)");
    run_cmd->add_flag("--no-log", run.no_log, "Skip writing the event log");
    run_cmd->add_option("--clock-skew-ms", run.clock_skew_ms, "Override the maximum local clock offset");

    GossipArgs gossip;
    auto* gossip_cmd = app.add_subcommand("gossip-validate", "Compare simulated gossip coverage with the logistic model");
    gossip_cmd->add_option("--n", gossip.n, "Node count")->capture_default_str();
    gossip_cmd->add_option("--beta", gossip.beta, "Transmission probability")->capture_default_str();
    gossip_cmd->add_option("--fanout", gossip.fanout, "Pushes per holder per time unit")->capture_default_str();
    gossip_cmd->add_option("--w0", gossip.w0, "Initial holders")->capture_default_str();
    gossip_cmd->add_option("--runs", gossip.runs, "Independent runs averaged")->capture_default_str();
    gossip_cmd->add_option("--dt", gossip.dt, "Sampling interval")->capture_default_str();
    gossip_cmd->add_option("--seed", gossip.seed, "Master seed");
    gossip_cmd->add_option("--out", gossip.out, "Output directory (default: $PCHAIN_OUT_DIR or ./out)");
    gossip_cmd->add_option("--sweep-fanout", gossip.sweep, "Also sweep these fanouts, e.g. 1,2,4")->delimiter(',');

    CommunityArgs comm;
    auto* comm_cmd = app.add_subcommand("communities", "Run fluid communities on an edge-list graph");
    comm_cmd->add_option("--graph", comm.graph, "Edge list file (\"n=<count>\" then \"u v\" lines)")->required();
    comm_cmd->add_option("--k", comm.k, "Number of communities")->capture_default_str();
    comm_cmd->add_option("--seed", comm.seed, "Master seed");
    comm_cmd->add_option("--out", comm.out, "Output directory (default: $PCHAIN_OUT_DIR or ./out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*run_cmd)
            return cmd_run(run);
        if (*gossip_cmd)
            return cmd_gossip(gossip);
        if (*comm_cmd)
            return cmd_communities(comm);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    }
    return exit_usage;
}
