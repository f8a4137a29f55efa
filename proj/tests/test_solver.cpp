#include <doctest.h>

#include <random>

#include "bsbl/dictionary.hpp"
#include "bsbl/metrics.hpp"
#include "bsbl/sensing.hpp"
#include "bsbl/solver.hpp"
#include "bsbl/synthetic.hpp"
#include "oracles.hpp"

using namespace bsbl;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = normal(rng);
    return m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(d, d);
}

Eigen::VectorXd random_vec(std::mt19937_64& rng, int d) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    return v;
}

std::vector<Eigen::MatrixXd> zero_blocks(const BlockPartition& part) {
    std::vector<Eigen::MatrixXd> a;
    for (int i = 0; i < part.num_blocks(); ++i)
        a.push_back(Eigen::MatrixXd::Zero(part.size(i), part.size(i)));
    return a;
}

} // namespace

// ------------------------------------------------------------ block algebra

TEST_CASE("exclude_block: inactive block is the identity map") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd s = random_spd(rng, 3);
    const Eigen::VectorXd q = random_vec(rng, 3);
    const auto [es, eq] = exclude_block(s, q, Eigen::MatrixXd::Zero(3, 3));
    CHECK((es - s).cwiseAbs().maxCoeff() == 0.0);
    CHECK((eq - q).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exclude_block: scalar algebra") {
    Eigen::MatrixXd s(1, 1), a(1, 1);
    Eigen::VectorXd q(1);
    s << 0.5;
    a << 1.0;
    q << 2.0;
    const auto [es, eq] = exclude_block(s, q, a);
    CHECK(es(0, 0) == doctest::Approx(1.0));
    CHECK(eq(0) == doctest::Approx(4.0));
}

TEST_CASE("exclude_block matches the from-scratch C_minus oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 12, d = 3;
        const BlockPartition part({d, d, d, d});
        Eigen::MatrixXd phi(m, part.n());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < part.n(); ++j) phi(i, j) = random_vec(rng, 1)(0);
        const Eigen::VectorXd y = random_vec(rng, m);
        const double beta_inv = 0.05;

        auto a_blocks = zero_blocks(part);
        a_blocks[1] = random_spd(rng, d);
        a_blocks[3] = random_spd(rng, d);

        const Eigen::MatrixXd c = oracle::build_c(phi, part, a_blocks, beta_inv);
        const Eigen::MatrixXd cinv = c.inverse();
        for (int blk : {1, 3}) {
            const auto phi_i = phi.middleCols(part.start(blk), d);
            const Eigen::MatrixXd big_s = phi_i.transpose() * cinv * phi_i;
            const Eigen::VectorXd big_q = phi_i.transpose() * cinv * y;
            const auto [s, q] = exclude_block(big_s, big_q, a_blocks[static_cast<std::size_t>(blk)]);
            const auto [os, oq] =
                oracle::exclusion_stats(phi, y, part, a_blocks, beta_inv, blk);
            CHECK((s - os).cwiseAbs().maxCoeff() < 1e-8 * os.cwiseAbs().maxCoeff());
            CHECK((q - oq).cwiseAbs().maxCoeff() <
                  1e-8 * std::max(1.0, oq.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("candidate_update: scalar cases") {
    Eigen::MatrixXd s(1, 1);
    Eigen::VectorXd q(1);
    s << 1.0;
    q << 2.0;
    CHECK(candidate_update(s, q)(0, 0) == doctest::Approx(3.0));
    q << 1.0;
    CHECK(candidate_update(s, q)(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("candidate_update matches dense evaluation") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd s = random_spd(rng, 2);
        const Eigen::VectorXd q = random_vec(rng, 2);
        const Eigen::MatrixXd sinv = s.inverse();
        const Eigen::MatrixXd ref = sinv * (q * q.transpose() - s) * sinv;
        const Eigen::MatrixXd got = candidate_update(s, q);
        CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-9 * ref.cwiseAbs().maxCoeff());
        CHECK((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("candidate_update: singular s rejected") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
    s(0, 0) = 1.0; // rank one
    Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
    CHECK_THROWS_AS(candidate_update(s, q), degeneracy_error);
}

TEST_CASE("factorize") {
    SUBCASE("identity") {
        const auto [gamma, b] = factorize(Eigen::MatrixXd::Identity(2, 2));
        CHECK(gamma == doctest::Approx(std::sqrt(2.0)));
        CHECK(b(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    }
    SUBCASE("zero maps to normalized identity") {
        const auto [gamma, b] = factorize(Eigen::MatrixXd::Zero(3, 3));
        CHECK(gamma == 0.0);
        CHECK(b.norm() == doctest::Approx(1.0));
        CHECK(b(0, 1) == 0.0);
    }
    SUBCASE("direct substitution") {
        Eigen::MatrixXd a(2, 2);
        a << 3, 1, 1, 3;
        const auto [gamma, b] = factorize(a);
        CHECK(gamma == doctest::Approx(std::sqrt(20.0)));
        CHECK((gamma * b - a).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(b.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("regularize") {
    SUBCASE("SIM is the normalized identity") {
        const Eigen::MatrixXd b = regularize(Eigen::MatrixXd::Random(4, 4),
                                             CorrelationModel::Sim);
        CHECK((b - Eigen::MatrixXd::Identity(4, 4) / 2.0).cwiseAbs().maxCoeff() <
              1e-12);
    }
    SUBCASE("AR1 with r=0 degenerates to SIM") {
        const Eigen::MatrixXd b = regularize(Eigen::MatrixXd::Random(3, 3),
                                             CorrelationModel::Ar1, 0.0);
        CHECK((b - Eigen::MatrixXd::Identity(3, 3) / std::sqrt(3.0)).cwiseAbs().maxCoeff() <
              1e-12);
    }
    SUBCASE("AR1 Toeplitz first row before normalization") {
        const Eigen::MatrixXd b = regularize(Eigen::MatrixXd::Random(3, 3),
                                             CorrelationModel::Ar1, 0.5);
        const double scale = b(0, 0);
        CHECK(b(0, 1) / scale == doctest::Approx(0.5));
        CHECK(b(0, 2) / scale == doctest::Approx(0.25));
        CHECK(b(2, 1) / scale == doctest::Approx(0.5));
        CHECK(b.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("|r| >= 1 clamped, never rejected") {
        const Eigen::MatrixXd b = regularize(Eigen::MatrixXd::Random(2, 2),
                                             CorrelationModel::Ar1, 1.7, 0.9);
        const double r_eff = b(0, 1) / b(0, 0);
        CHECK(r_eff == doctest::Approx(0.9));
    }
}

TEST_CASE("estimate_r") {
    Eigen::MatrixXd exact(2, 2);
    exact << 1, 0.5, 0.5, 1;
    CHECK(estimate_r({exact}) == doctest::Approx(0.5));
    CHECK(estimate_r({Eigen::MatrixXd::Identity(3, 3)}) == doctest::Approx(0.0));
    Eigen::MatrixXd b1 = ar1_structure(4, 0.4);
    Eigen::MatrixXd b2 = ar1_structure(4, 0.8);
    CHECK(estimate_r({b1, b2}) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(estimate_r({}) == 0.0);
}

TEST_CASE("block_cost") {
    SUBCASE("zero block contributes nothing") {
        std::mt19937_64 rng(4);
        const Eigen::MatrixXd s = random_spd(rng, 3);
        const Eigen::VectorXd q = random_vec(rng, 3);
        CHECK(block_cost(Eigen::MatrixXd::Zero(3, 3), s, q) == 0.0);
    }
    SUBCASE("scalar evaluation") {
        Eigen::MatrixXd a(1, 1), s(1, 1);
        Eigen::VectorXd q(1);
        a << 3;
        s << 1;
        q << 2;
        CHECK(block_cost(a, s, q) == doctest::Approx(std::log(4.0) - 3.0));
    }
    SUBCASE("q = 0 gives a pure nonnegative penalty") {
        std::mt19937_64 rng(5);
        const Eigen::MatrixXd a = random_spd(rng, 2);
        const Eigen::MatrixXd s = random_spd(rng, 2);
        CHECK(block_cost(a, s, Eigen::VectorXd::Zero(2)) >= 0.0);
    }
    SUBCASE("agrees with the full-cost difference") {
        // L(A_i) == [full cost with block i at A_i] - [full cost with block i removed]
        std::mt19937_64 rng(6);
        const int m = 10, d = 2;
        const BlockPartition part({d, d, d});
        Eigen::MatrixXd phi(m, part.n());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < part.n(); ++j) phi(i, j) = random_vec(rng, 1)(0);
        const Eigen::VectorXd y = random_vec(rng, m);
        const double beta_inv = 0.2;
        auto a_blocks = zero_blocks(part);
        a_blocks[0] = random_spd(rng, d);
        a_blocks[2] = random_spd(rng, d);

        const auto [s, q] = oracle::exclusion_stats(phi, y, part, a_blocks, beta_inv, 2);
        const double with = oracle::full_cost(
            oracle::build_c(phi, part, a_blocks, beta_inv), y);
        auto without = a_blocks;
        without[2].setZero();
        const double base = oracle::full_cost(
            oracle::build_c(phi, part, without, beta_inv), y);
        CHECK(block_cost(a_blocks[2], s, q) ==
              doctest::Approx(with - base).epsilon(1e-8));
    }
}

// ------------------------------------------------------------------ solver

namespace {

struct Instance {
    Eigen::MatrixXd phi;
    Eigen::VectorXd y;
    BlockPartition part{std::vector<int>{1}};
    SolverConfig cfg;
};

Instance random_instance(std::mt19937_64& rng, int m, int n, int block_size,
                         int active, double beta_inv) {
    Instance inst;
    inst.part = BlockPartition::uniform(n, block_size);
    inst.phi.resize(m, n);
    std::normal_distribution<double> normal;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) inst.phi(i, j) = normal(rng);
    SyntheticParams p;
    p.active_blocks = active;
    p.intra_r = 0.8;
    const Eigen::VectorXd x = make_block_sparse_signal(inst.part, p, rng());
    inst.y = inst.phi * x;
    inst.cfg.beta_inv = beta_inv;
    return inst;
}

std::vector<Eigen::MatrixXd> collect_a(const Solver& solver) {
    std::vector<Eigen::MatrixXd> a;
    const auto& part = solver.partition();
    for (int i = 0; i < part.num_blocks(); ++i)
        a.push_back(solver.block_active(i)
                        ? solver.block_a(i)
                        : Eigen::MatrixXd::Zero(part.size(i), part.size(i)));
    return a;
}

} // namespace

TEST_CASE("init: all blocks inactive, S and Q at their definitional values") {
    std::mt19937_64 rng(7);
    auto inst = random_instance(rng, 8, 16, 4, 1, 1e-6);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    for (int i = 0; i < inst.part.num_blocks(); ++i) {
        CHECK_FALSE(solver.block_active(i));
        const auto phi_i = inst.phi.middleCols(inst.part.start(i), 4);
        const Eigen::MatrixXd s_ref = 1e6 * phi_i.transpose() * phi_i;
        const Eigen::VectorXd q_ref = 1e6 * phi_i.transpose() * inst.y;
        CHECK((solver.block_s(i) - s_ref).cwiseAbs().maxCoeff() <
              1e-8 * s_ref.cwiseAbs().maxCoeff());
        CHECK((solver.block_q(i) - q_ref).cwiseAbs().maxCoeff() <
              1e-8 * q_ref.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("init: dimension mismatches rejected") {
    std::mt19937_64 rng(8);
    auto inst = random_instance(rng, 8, 16, 4, 1, 1e-6);
    CHECK_THROWS_AS(Solver(inst.y, inst.phi, BlockPartition::uniform(12, 4), inst.cfg),
                    dimension_error);
    CHECK_THROWS_AS(Solver(Eigen::VectorXd::Zero(7), inst.phi, inst.part, inst.cfg),
                    dimension_error);
}

TEST_CASE("zero measurements recover the zero signal immediately") {
    std::mt19937_64 rng(9);
    auto inst = random_instance(rng, 8, 16, 4, 1, 1e-6);
    const auto report = solve(Eigen::VectorXd::Zero(8), inst.phi, inst.part, inst.cfg);
    CHECK(report.theta_hat.isZero(0.0));
    CHECK(report.iterations == 0);
    CHECK(report.active_blocks.empty());
}

TEST_CASE("first sweep: all candidates are adds with delta = L(A*)") {
    std::mt19937_64 rng(10);
    auto inst = random_instance(rng, 8, 16, 4, 2, 1e-4);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    const double empty_cost = solver.cost();
    auto step = solver.step();
    REQUIRE(step.has_value());
    CHECK(step->action == StepAction::Add);
    CHECK(step->delta < 0.0);
    CHECK(solver.cost() == doctest::Approx(empty_cost + step->delta));
}

TEST_CASE("d=1 blocks: a re-applied candidate is a fixed point") {
    // with scalar blocks the SIM rebuild keeps the stationary value, so the
    // second estimate of the same block changes nothing
    std::mt19937_64 rng(11);
    auto inst = random_instance(rng, 6, 8, 1, 2, 1e-4);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    auto first = solver.step();
    REQUIRE(first.has_value());
    const int blk = first->block;
    const auto [s, q] =
        exclude_block(solver.block_s(blk), solver.block_q(blk), solver.block_a(blk));
    const Eigen::MatrixXd cand = candidate_update(s, q);
    const double delta =
        block_cost(cand, s, q) - block_cost(solver.block_a(blk), s, q);
    CHECK(std::abs(delta) < 1e-9);
}

TEST_CASE("incremental cost tracks the from-scratch oracle") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(rng, 12, 24, 4, 2, 1e-3);
        Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
        for (int it = 0; it < 30; ++it) {
            if (!solver.step()) break;
            const double ref = oracle::full_cost(
                oracle::build_c(inst.phi, inst.part, collect_a(solver),
                                inst.cfg.beta_inv),
                inst.y);
            CHECK(solver.cost() ==
                  doctest::Approx(ref).epsilon(1e-8));
        }
    }
}

TEST_CASE("accepted steps never increase the cost") {
    std::mt19937_64 rng(13);
    auto inst = random_instance(rng, 16, 32, 4, 3, 1e-4);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    double prev = solver.cost();
    while (auto step = solver.step()) {
        CHECK(step->delta <= 1e-12);
        CHECK(solver.cost() <= prev + 1e-9);
        prev = solver.cost();
    }
}

TEST_CASE("apply then delete restores S and Q (involution)") {
    std::mt19937_64 rng(14);
    auto inst = random_instance(rng, 12, 24, 4, 2, 1e-3);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    const Eigen::MatrixXd s_before = solver.block_s(2);
    const Eigen::VectorXd q_before = solver.block_q(2);
    const Eigen::MatrixXd a = random_spd(rng, 4);
    solver.apply_block(3, a);
    CHECK(solver.block_active(3));
    solver.apply_block(3, Eigen::MatrixXd::Zero(4, 4));
    CHECK_FALSE(solver.block_active(3));
    CHECK((solver.block_s(2) - s_before).cwiseAbs().maxCoeff() <
          1e-8 * s_before.cwiseAbs().maxCoeff());
    CHECK((solver.block_q(2) - q_before).cwiseAbs().maxCoeff() <
          1e-8 * std::max(1.0, q_before.cwiseAbs().maxCoeff()));
}

TEST_CASE("S and Q match their definitions against the current model") {
    std::mt19937_64 rng(15);
    auto inst = random_instance(rng, 12, 24, 4, 2, 1e-3);
    Solver solver(inst.y, inst.phi, inst.part, inst.cfg);
    solver.step();
    solver.step();
    const Eigen::MatrixXd c =
        oracle::build_c(inst.phi, inst.part, collect_a(solver), inst.cfg.beta_inv);
    const Eigen::MatrixXd cinv = c.inverse();
    for (int i = 0; i < inst.part.num_blocks(); ++i) {
        const auto phi_i = inst.phi.middleCols(inst.part.start(i), 4);
        const Eigen::MatrixXd s_ref = phi_i.transpose() * cinv * phi_i;
        const Eigen::VectorXd q_ref = phi_i.transpose() * cinv * inst.y;
        CHECK((solver.block_s(i) - s_ref).cwiseAbs().maxCoeff() <
              1e-8 * std::max(1.0, s_ref.cwiseAbs().maxCoeff()));
        CHECK((solver.block_q(i) - q_ref).cwiseAbs().maxCoeff() <
              1e-8 * std::max(1.0, q_ref.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("two-block toy problem: the true block has the deepest descent") {
    std::mt19937_64 rng(16);
    const BlockPartition part({4, 4});
    Eigen::MatrixXd phi(6, 8);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j) phi(i, j) = normal(rng);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(8);
    for (int j = 4; j < 8; ++j) x(j) = normal(rng);
    const Eigen::VectorXd y = phi * x;
    SolverConfig cfg;
    cfg.beta_inv = 1e-6;
    Solver solver(y, phi, part, cfg);
    auto step = solver.step();
    REQUIRE(step.has_value());
    CHECK(step->block == 1);
    // brute-force check against single-block model costs
    double best = 0.0;
    int best_blk = -1;
    for (int i = 0; i < 2; ++i) {
        const auto phi_i = phi.middleCols(part.start(i), 4);
        const Eigen::MatrixXd s = (1.0 / cfg.beta_inv) * phi_i.transpose() * phi_i;
        const Eigen::VectorXd q = (1.0 / cfg.beta_inv) * phi_i.transpose() * y;
        Eigen::MatrixXd cand;
        try {
            cand = candidate_update(s, q);
        } catch (const degeneracy_error&) {
            continue;
        }
        auto [gamma, b] = factorize(cand);
        const Eigen::MatrixXd a_star =
            gamma * regularize(b, CorrelationModel::Sim);
        const double cost = block_cost(a_star, s, q);
        if (cost < best) {
            best = cost;
            best_blk = i;
        }
    }
    CHECK(best_blk == 1);
}

TEST_CASE("noiseless recovery at small scale, SIM and AR1") {
    std::mt19937_64 rng(17);
    int sim_ok = 0, ar_ok = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
        const BlockPartition part = BlockPartition::uniform(64, 8);
        SyntheticParams p;
        p.active_blocks = 2;
        p.intra_r = 0.95;
        const Eigen::VectorXd x = make_block_sparse_signal(part, p, rng());
        Eigen::MatrixXd phi(32, 64);
        std::normal_distribution<double> normal;
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 64; ++j) phi(i, j) = normal(rng);
        const Eigen::VectorXd y = phi * x;
        SolverConfig cfg;
        cfg.beta_inv = 1e-6;
        cfg.model = CorrelationModel::Sim;
        if (prd(x, solve(y, phi, part, cfg).x_hat) < 5.0) ++sim_ok;
        cfg.model = CorrelationModel::Ar1;
        if (prd(x, solve(y, phi, part, cfg).x_hat) < 1.0) ++ar_ok;
    }
    CHECK(sim_ok >= 8);
    CHECK(ar_ok >= 8);
}

TEST_CASE("SIM and AR1 select identical sequences when r is forced to 0") {
    // uncorrelated blocks make estimate_r return ~0; instead force it
    // structurally with d=1 blocks where AR1 and SIM coincide exactly
    std::mt19937_64 rng(18);
    auto inst = random_instance(rng, 10, 20, 1, 3, 1e-4);
    SolverConfig sim_cfg = inst.cfg;
    sim_cfg.model = CorrelationModel::Sim;
    SolverConfig ar_cfg = inst.cfg;
    ar_cfg.model = CorrelationModel::Ar1;
    Solver a(inst.y, inst.phi, inst.part, sim_cfg);
    Solver b(inst.y, inst.phi, inst.part, ar_cfg);
    while (true) {
        auto sa = a.step();
        auto sb = b.step();
        CHECK(sa.has_value() == sb.has_value());
        if (!sa || !sb) break;
        CHECK(sa->block == sb->block);
        CHECK(sa->delta == doctest::Approx(sb->delta).epsilon(1e-10));
    }
}

TEST_CASE("scale equivariance of the selection sequence") {
    std::mt19937_64 rng(19);
    auto inst = random_instance(rng, 12, 24, 4, 2, 1e-4);
    const double c = 7.5;
    SolverConfig scaled_cfg = inst.cfg;
    scaled_cfg.beta_inv = inst.cfg.beta_inv * c * c;
    Solver base(inst.y, inst.phi, inst.part, inst.cfg);
    Solver scaled(c * inst.y, inst.phi, inst.part, scaled_cfg);
    for (int it = 0; it < 50; ++it) {
        auto sa = base.step();
        auto sb = scaled.step();
        CHECK(sa.has_value() == sb.has_value());
        if (!sa || !sb) break;
        CHECK(sa->block == sb->block);
        CHECK(static_cast<int>(sa->action) == static_cast<int>(sb->action));
    }
}

TEST_CASE("max_iter cap reports best-so-far with a flag") {
    std::mt19937_64 rng(20);
    auto inst = random_instance(rng, 16, 32, 4, 3, 1e-4);
    inst.cfg.max_iter = 1;
    const auto report = solve(inst.y, inst.phi, inst.part, inst.cfg);
    CHECK(report.iterations == 1);
    CHECK(report.hit_max_iter);
}

TEST_CASE("x_hat goes through the dictionary when one is supplied") {
    std::mt19937_64 rng(21);
    const auto dict = dct_dictionary(16);
    const auto phi = SparseBinaryMatrix::generate(8, 16, 2, 77);
    const Eigen::MatrixXd op = effective_operator(phi, dict);
    const BlockPartition part = BlockPartition::uniform(16, 4);
    SyntheticParams p;
    p.active_blocks = 1;
    const Eigen::VectorXd theta = make_block_sparse_signal(part, p, 5);
    const Eigen::VectorXd y = op * theta;
    SolverConfig cfg;
    cfg.beta_inv = 1e-6;
    const auto report = solve(y, op, part, cfg, &dict);
    CHECK((report.x_hat - dict.matrix * report.theta_hat).cwiseAbs().maxCoeff() <
          1e-10);
    CHECK(report.wall_time >= 0.0);
}
