// Command-line front end: sensing-matrix generation, CS / DWT compression,
// BSBL-FM recovery, and CR sweep benchmarks.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsbl/dictionary.hpp"
#include "bsbl/dwt53.hpp"
#include "bsbl/io.hpp"
#include "bsbl/metrics.hpp"
#include "bsbl/sensing.hpp"
#include "bsbl/signal_model.hpp"
#include "bsbl/solver.hpp"
#include "bsbl/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDataFormat = 3;
constexpr int kExitDegeneracy = 4;

int worker_count(int requested) {
    if (const char* env = std::getenv("BSBL_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Runs fn(i) for i in [0, count) on a pool; results land indexed, so output
/// order is independent of scheduling.
template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    threads = std::min(threads, std::max(count, 1));
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

bsbl::SparseBinaryMatrix load_matrix(const std::string& path) {
    return bsbl::io::matrix_from_header_json(bsbl::io::slurp(path));
}

std::vector<bsbl::Measurement> load_measurements(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw bsbl::io_error("cannot open " + path);
    std::array<char, 8> magic{};
    f.read(magic.data(), magic.size());
    f.seekg(0);
    if (f.gcount() == 8 && magic == bsbl::io::kMeasurementMagic)
        return bsbl::io::read_measurements_binary(f);
    return bsbl::io::read_measurements_csv(f);
}

struct PacketOutcome {
    bsbl::RecoveryReport report;
    double prd_value = 0.0;
    bool failed = false;
    std::string error;
};

nlohmann::json report_to_json(const PacketOutcome& o, std::size_t index) {
    nlohmann::json j;
    j["packet"] = index;
    j["failed"] = o.failed;
    if (o.failed) {
        j["error"] = o.error;
        return j;
    }
    j["iterations"] = o.report.iterations;
    j["final_cost"] = o.report.final_cost;
    j["wall_time_s"] = o.report.wall_time;
    j["active_blocks"] = o.report.active_blocks;
    j["hit_max_iter"] = o.report.hit_max_iter;
    return j;
}

// ----------------------------------------------------------------- gen-matrix

int cmd_gen_matrix(int m, int n, int k, std::uint64_t seed, const std::string& out) {
    const auto phi = bsbl::SparseBinaryMatrix::generate(m, n, k, seed);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw bsbl::io_error("cannot write " + out);
    f << bsbl::io::matrix_header_json(phi);
    std::cerr << "wrote " << out << " (m=" << m << " n=" << n << " k=" << k
              << " seed=" << seed << ")\n";
    return kExitOk;
}

// ------------------------------------------------------------------- compress

int cmd_compress(const std::string& input, const std::string& matrix_path,
                 const std::string& out, const std::string& mode, int packet_size,
                 int stages, int threshold_t, const std::string& format) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw bsbl::io_error("cannot open " + input);
    const Eigen::VectorXd stream = bsbl::io::read_signal_csv(in);

    if (mode == "cs") {
        if (matrix_path.empty())
            throw CLI::ValidationError("--matrix is required in cs mode");
        const auto phi = load_matrix(matrix_path);
        if (packet_size > 0 && packet_size != phi.cols())
            throw bsbl::dimension_error(
                "packet size " + std::to_string(packet_size) +
                " does not match matrix columns " + std::to_string(phi.cols()));
        const auto packets = bsbl::packetize(stream, phi.cols());
        if (packets.dropped)
            std::cerr << "dropped " << packets.dropped << " trailing samples\n";
        std::vector<bsbl::Measurement> meas;
        meas.reserve(packets.packets.size());
        for (const auto& pkt : packets.packets)
            meas.push_back({bsbl::encode_stream(phi, pkt.samples), pkt.index});
        std::ofstream f(out, std::ios::binary);
        if (!f) throw bsbl::io_error("cannot write " + out);
        if (format == "bin")
            bsbl::io::write_measurements_binary(f, meas);
        else
            bsbl::io::write_measurements_csv(f, meas);
        std::cerr << "wrote " << meas.size() << " measurement packets to " << out
                  << "\n";
        return kExitOk;
    }

    // dwt mode: integer lifting on rounded samples
    const int n = packet_size > 0 ? packet_size : 512;
    const auto packets = bsbl::packetize(stream, n);
    if (packets.dropped)
        std::cerr << "dropped " << packets.dropped << " trailing samples\n";
    std::ofstream f(out, std::ios::binary);
    if (!f) throw bsbl::io_error("cannot write " + out);
    for (const auto& pkt : packets.packets) {
        bsbl::IntSignal x(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] =
                static_cast<std::int32_t>(std::lround(pkt.samples(i)));
        const auto s = bsbl::threshold_compress(bsbl::forward(x, stages), threshold_t);
        bsbl::io::write_dwt_stream(f, s);
    }
    std::cerr << "wrote " << packets.packets.size() << " thresholded streams to "
              << out << "\n";
    return kExitOk;
}

// -------------------------------------------------------------------- recover

int cmd_recover(const std::string& meas_path, const std::string& matrix_path,
                const std::string& dict_name, int model, double beta_inv,
                double eta, int block_size, const std::string& out,
                const std::string& report_path, int threads) {
    const auto phi = load_matrix(matrix_path);
    const auto meas = load_measurements(meas_path);
    for (const auto& m : meas)
        if (m.values.size() != phi.rows())
            throw bsbl::dimension_error(
                "measurement packet length " + std::to_string(m.values.size()) +
                " does not match matrix rows " + std::to_string(phi.rows()));

    std::optional<bsbl::DctDictionary> dict;
    Eigen::MatrixXd op;
    if (dict_name == "dct") {
        dict = bsbl::dct_dictionary(phi.cols());
        op = bsbl::effective_operator(phi, *dict);
    } else {
        op = phi.dense();
    }
    const auto part = bsbl::BlockPartition::uniform(phi.cols(), block_size);

    bsbl::SolverConfig cfg;
    cfg.model = model == 1 ? bsbl::CorrelationModel::Ar1 : bsbl::CorrelationModel::Sim;
    cfg.eta = eta;
    std::vector<PacketOutcome> outcomes(meas.size());
    parallel_for(static_cast<int>(meas.size()), worker_count(threads), [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        auto local = cfg;
        if (beta_inv > 0.0)
            local.beta_inv = beta_inv;
        else
            local.beta_inv = 0.01 * meas[idx].values.squaredNorm(); // noisy default
        try {
            outcomes[idx].report = bsbl::solve(meas[idx].values, op, part, local,
                                               dict ? &*dict : nullptr);
        } catch (const bsbl::degeneracy_error& e) {
            outcomes[idx].failed = true;
            outcomes[idx].error = e.what();
        }
    });

    std::ofstream f(out, std::ios::binary);
    if (!f) throw bsbl::io_error("cannot write " + out);
    f << std::setprecision(17);
    for (const auto& o : outcomes) {
        if (o.failed) {
            f << "\n";
            continue;
        }
        for (Eigen::Index i = 0; i < o.report.x_hat.size(); ++i) {
            if (i) f << ',';
            f << o.report.x_hat(i);
        }
        f << '\n';
    }

    nlohmann::json sidecar;
    sidecar["format_version"] = 1;
    sidecar["matrix"] = {{"m", phi.rows()},
                         {"n", phi.cols()},
                         {"k", phi.ones_per_column()},
                         {"seed", phi.seed()}};
    sidecar["dict"] = dict_name;
    sidecar["model"] = model;
    sidecar["beta_inv"] = beta_inv;
    sidecar["eta"] = eta;
    sidecar["block_size"] = block_size;
    sidecar["packets"] = nlohmann::json::array();
    int failures = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        sidecar["packets"].push_back(report_to_json(outcomes[i], i));
        if (outcomes[i].failed) ++failures;
    }
    const std::string rpath = report_path.empty() ? out + ".json" : report_path;
    std::ofstream rf(rpath, std::ios::binary);
    if (!rf) throw bsbl::io_error("cannot write " + rpath);
    rf << sidecar.dump(2) << "\n";

    if (failures) {
        std::cerr << failures << " of " << outcomes.size() << " packets failed\n";
        return kExitDegeneracy;
    }
    std::cerr << "recovered " << outcomes.size() << " packets to " << out << "\n";
    return kExitOk;
}

// ----------------------------------------------------------------- dwt-expand

int cmd_dwt_expand(const std::string& in_path, const std::string& out,
                   const std::string& ref_path) {
    std::ifstream f(in_path, std::ios::binary);
    if (!f) throw bsbl::io_error("cannot open " + in_path);
    std::vector<bsbl::IntSignal> packets;
    while (f.peek() != EOF)
        packets.push_back(bsbl::inverse(bsbl::expand(bsbl::io::read_dwt_stream(f))));

    std::ofstream of(out, std::ios::binary);
    if (!of) throw bsbl::io_error("cannot write " + out);
    for (const auto& pkt : packets) {
        for (std::size_t i = 0; i < pkt.size(); ++i) {
            if (i) of << ',';
            of << pkt[i];
        }
        of << '\n';
    }

    if (!ref_path.empty() && !packets.empty()) {
        std::ifstream rf(ref_path, std::ios::binary);
        if (!rf) throw bsbl::io_error("cannot open " + ref_path);
        const Eigen::VectorXd ref = bsbl::io::read_signal_csv(rf);
        const int n = static_cast<int>(packets[0].size());
        for (std::size_t p = 0; p < packets.size(); ++p) {
            const auto offset = static_cast<Eigen::Index>(p) * n;
            if (offset + n > ref.size()) break;
            Eigen::VectorXd x = ref.segment(offset, n);
            // integer pipeline compares against the rounded reference
            for (int i = 0; i < n; ++i) x(i) = std::round(x(i));
            Eigen::VectorXd xh(n);
            for (int i = 0; i < n; ++i)
                xh(i) = static_cast<double>(packets[p][static_cast<std::size_t>(i)]);
            std::cout << "packet " << p << " prd " << bsbl::prd(x, xh) << "\n";
        }
    }
    std::cerr << "expanded " << packets.size() << " packets to " << out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------- bench

struct BenchConfig {
    int n = 512;
    int block_size = 32;
    int k = 2;
    std::vector<double> cr_list;
    std::vector<std::string> models; // "SIM", "AR1"
    double beta_inv = 1e-6;
    double eta = 1e-5;
    std::uint64_t seed = 0;
    std::string input = "synthetic";
    int packets = 20;
    bsbl::SyntheticParams synth;
};

BenchConfig parse_bench_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bsbl::io::slurp(path));
    } catch (const nlohmann::json::exception& e) {
        throw bsbl::io_error(std::string("bench config: ") + e.what());
    }
    BenchConfig c;
    c.n = j.value("n", 512);
    c.block_size = j.value("block_size", 32);
    c.k = j.value("k", 2);
    if (!j.contains("cr_list") || !j["cr_list"].is_array() || j["cr_list"].empty())
        throw CLI::ValidationError("bench config: cr_list must be a non-empty array");
    for (const auto& v : j["cr_list"]) {
        const double cr = v.get<double>();
        if (cr < 0.0 || cr >= 1.0)
            throw CLI::ValidationError("bench config: CR values must lie in [0, 1)");
        c.cr_list.push_back(cr);
    }
    const std::string model = j.value("model", std::string("both"));
    if (model == "both")
        c.models = {"SIM", "AR1"};
    else if (model == "SIM" || model == "AR1")
        c.models = {model};
    else
        throw CLI::ValidationError("bench config: model must be SIM, AR1 or both");
    if (c.n % c.block_size != 0)
        throw CLI::ValidationError("bench config: block_size must divide n");
    c.beta_inv = j.value("beta_inv", 1e-6);
    c.eta = j.value("eta", 1e-5);
    c.seed = j.value("seed", std::uint64_t{0});
    c.input = j.value("input", std::string("synthetic"));
    c.packets = j.value("packets", 20);
    if (j.contains("synthetic_params")) {
        const auto& s = j["synthetic_params"];
        c.synth.active_blocks = s.value("active_blocks", 3);
        c.synth.intra_r = s.value("intra_r", 0.95);
        c.synth.noise_db = s.value("noise_db", 0.0);
    }
    return c;
}

int cmd_bench(const std::string& config_path, const std::string& out_path,
              int threads) {
    const BenchConfig cfg = parse_bench_config(config_path);

    std::vector<Eigen::VectorXd> signals;
    std::optional<bsbl::DctDictionary> dict;
    const auto part = bsbl::BlockPartition::uniform(cfg.n, cfg.block_size);
    if (cfg.input == "synthetic") {
        for (int p = 0; p < cfg.packets; ++p)
            signals.push_back(bsbl::make_block_sparse_signal(
                part, cfg.synth, cfg.seed * 1000003ULL + static_cast<std::uint64_t>(p)));
    } else {
        std::ifstream f(cfg.input, std::ios::binary);
        if (!f) throw bsbl::io_error("cannot open " + cfg.input);
        const auto packets = bsbl::packetize(bsbl::io::read_signal_csv(f), cfg.n);
        if (packets.dropped)
            std::cerr << "dropped " << packets.dropped << " trailing samples\n";
        for (const auto& pkt : packets.packets) signals.push_back(pkt.samples);
        dict = bsbl::dct_dictionary(cfg.n);
    }
    if (signals.empty())
        throw bsbl::io_error("bench: no packets to process");

    std::ostringstream table;
    table << "cr,model,prd_mean,prd_median,time_median_s,iterations_mean,errors\n";
    table << std::setprecision(10);

    for (std::size_t ci = 0; ci < cfg.cr_list.size(); ++ci) {
        const double cr = cfg.cr_list[ci];
        const int m = bsbl::rows_for_cr(cfg.n, cr);
        const auto phi = bsbl::SparseBinaryMatrix::generate(
            m, cfg.n, cfg.k, cfg.seed + 7919ULL * (ci + 1));
        const Eigen::MatrixXd op =
            dict ? bsbl::effective_operator(phi, *dict) : phi.dense();

        for (const auto& model : cfg.models) {
            bsbl::SolverConfig scfg;
            scfg.beta_inv = cfg.beta_inv;
            scfg.eta = cfg.eta;
            scfg.model = model == "AR1" ? bsbl::CorrelationModel::Ar1
                                        : bsbl::CorrelationModel::Sim;

            std::vector<double> prds(signals.size()), times(signals.size()),
                iters(signals.size());
            std::vector<char> failed(signals.size(), 0);
            parallel_for(static_cast<int>(signals.size()), worker_count(threads),
                         [&](int i) {
                const auto idx = static_cast<std::size_t>(i);
                const Eigen::VectorXd& x = signals[idx];
                Eigen::VectorXd y = bsbl::encode_stream(phi, x);
                if (cfg.synth.noise_db > 0.0 && cfg.input == "synthetic")
                    y = bsbl::add_noise(y, cfg.synth.noise_db,
                                        cfg.seed * 7ULL + idx + 13ULL);
                try {
                    const auto report = bsbl::solve(y, op, part, scfg,
                                                    dict ? &*dict : nullptr);
                    prds[idx] = bsbl::prd(x, report.x_hat);
                    times[idx] = report.wall_time;
                    iters[idx] = static_cast<double>(report.iterations);
                } catch (const bsbl::degeneracy_error&) {
                    failed[idx] = 1;
                }
            });

            std::vector<double> ok_prd, ok_time, ok_iter;
            int errors = 0;
            for (std::size_t i = 0; i < signals.size(); ++i) {
                if (failed[i]) {
                    ++errors;
                    continue;
                }
                ok_prd.push_back(prds[i]);
                ok_time.push_back(times[i]);
                ok_iter.push_back(iters[i]);
            }
            table << cr << ',' << model << ',' << bsbl::mean(ok_prd) << ','
                  << bsbl::median(ok_prd) << ',' << bsbl::median(ok_time) << ','
                  << bsbl::mean(ok_iter) << ',' << errors << '\n';
        }
    }

    if (out_path.empty()) {
        std::cout << table.str();
    } else {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw bsbl::io_error("cannot write " + out_path);
        f << table.str();
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-sparse Bayesian compressed-sensing toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: cores)");

    // gen-matrix
    auto* gen = app.add_subcommand("gen-matrix", "generate a sparse binary sensing matrix");
    int gm_m = 256, gm_n = 512, gm_k = 2;
    std::uint64_t gm_seed = 0;
    std::string gm_out;
    gen->add_option("--m", gm_m, "rows (measurements)")->required();
    gen->add_option("--n", gm_n, "columns (packet size)")->required();
    gen->add_option("--k", gm_k, "ones per column")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", gm_seed, "RNG seed")->required();
    gen->add_option("--out", gm_out, "output header JSON")->required();

    // compress
    auto* comp = app.add_subcommand("compress", "compress a CSV recording");
    std::string c_input, c_matrix, c_out, c_mode = "cs", c_format = "csv";
    int c_n = 0, c_stages = 4, c_t = 8;
    comp->add_option("--input", c_input, "input CSV")->required();
    comp->add_option("--matrix", c_matrix, "matrix header JSON (cs mode)");
    comp->add_option("--out", c_out, "output file")->required();
    comp->add_option("--mode", c_mode, "cs|dwt")->check(CLI::IsMember({"cs", "dwt"}));
    comp->add_option("--n", c_n, "packet size (dwt mode, default 512)");
    comp->add_option("--stages", c_stages, "DWT stages (default 4)");
    comp->add_option("--T", c_t, "threshold exponent (default 8)");
    comp->add_option("--format", c_format, "csv|bin measurement format")
        ->check(CLI::IsMember({"csv", "bin"}));

    // recover
    auto* rec = app.add_subcommand("recover", "recover packets from measurements");
    std::string r_meas, r_matrix, r_dict = "dct", r_out, r_report;
    int r_model = 0, r_block = 32;
    double r_beta_inv = 1e-6, r_eta = 1e-5;
    rec->add_option("--meas", r_meas, "measurements file (csv or bin)")->required();
    rec->add_option("--matrix", r_matrix, "matrix header JSON")->required();
    rec->add_option("--dict", r_dict, "dct|none")->check(CLI::IsMember({"dct", "none"}));
    rec->add_option("--model", r_model, "0 = SIM, 1 = AR1")->check(CLI::Range(0, 1));
    rec->add_option("--beta-inv", r_beta_inv,
                    "noise variance (0 = noisy default 0.01*||y||^2)");
    rec->add_option("--eta", r_eta, "convergence threshold");
    rec->add_option("--block-size", r_block, "block size (default 32)");
    rec->add_option("--out", r_out, "recovered signals CSV")->required();
    rec->add_option("--report", r_report, "report sidecar JSON (default <out>.json)");

    // dwt-expand
    auto* exp = app.add_subcommand("dwt-expand", "reconstruct from thresholded streams");
    std::string e_in, e_out, e_ref;
    exp->add_option("--in", e_in, "thresholded stream file")->required();
    exp->add_option("--out", e_out, "reconstructed CSV")->required();
    exp->add_option("--ref", e_ref, "original CSV for PRD reporting");

    // bench
    auto* bench = app.add_subcommand("bench", "CR sweep benchmark");
    std::string b_config, b_out;
    bench->add_option("--config", b_config, "bench config JSON")->required();
    bench->add_option("--out", b_out, "results CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_matrix(gm_m, gm_n, gm_k, gm_seed, gm_out);
        if (comp->parsed())
            return cmd_compress(c_input, c_matrix, c_out, c_mode, c_n, c_stages, c_t,
                                c_format);
        if (rec->parsed())
            return cmd_recover(r_meas, r_matrix, r_dict, r_model, r_beta_inv, r_eta,
                               r_block, r_out, r_report, threads);
        if (exp->parsed())
            return cmd_dwt_expand(e_in, e_out, e_ref);
        if (bench->parsed())
            return cmd_bench(b_config, b_out, threads);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const bsbl::degeneracy_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDegeneracy;
    } catch (const bsbl::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataFormat;
    }
    return kExitUsage;
}
