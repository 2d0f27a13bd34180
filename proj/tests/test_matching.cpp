#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "proseco/matching.hpp"
#include "proseco/rng.hpp"

using namespace proseco;

namespace {

CostMatrix make(int rows, int cols, std::vector<double> v) {
    CostMatrix c;
    c.rows = rows;
    c.cols = cols;
    c.entries = std::move(v);
    return c;
}

std::vector<std::vector<double>> to_oracle(const CostMatrix& c) {
    std::vector<std::vector<double>> m(static_cast<size_t>(c.rows),
                                       std::vector<double>(static_cast<size_t>(c.cols)));
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) m[i][j] = c.at(i, j);
    return m;
}

BoxN random_box(Rng& rng) {
    const float w = static_cast<float>(rng.uniform(0.05, 0.5));
    const float h = static_cast<float>(rng.uniform(0.05, 0.5));
    return BoxN(static_cast<float>(rng.uniform(w / 2, 1 - w / 2)),
                static_cast<float>(rng.uniform(h / 2, 1 - h / 2)), w, h);
}

ProposalSet random_proposals(int n, int d, Rng& rng) {
    ProposalSet p;
    std::vector<float> e(static_cast<size_t>(n) * d);
    for (auto& x : e) x = static_cast<float>(rng.uniform(-1, 1));
    p.embeddings = l2_normalize_rows(Tensor::from({n, d}, std::move(e)));
    for (int i = 0; i < n; ++i) p.boxes.boxes.push_back(random_box(rng));
    p.box_tensor = boxes_to_tensor(p.boxes);
    return p;
}

}  // namespace

TEST_CASE("zero diagonal matches identity") {
    auto c = make(3, 3, {0, 5, 5, 5, 0, 5, 5, 5, 0});
    auto a = hungarian(c);
    CHECK(a.total_cost == 0.0);
    for (int i = 0; i < 3; ++i) CHECK(a.target_of(i) == i);
}

TEST_CASE("worked 3x3 example") {
    auto a = hungarian(make(3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2}));
    CHECK(a.total_cost == 5.0);
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}, {2, 2}});
}

TEST_CASE("rectangular and empty matrices") {
    auto a = hungarian(make(1, 2, {3, 1}));
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 1}});
    CHECK(a.total_cost == 1.0);

    CHECK(hungarian(CostMatrix{}).pairs.empty());
    CHECK(hungarian(CostMatrix{}).total_cost == 0.0);

    // wide-to-tall transposition: 3 rows, 2 cols; rows 1 and 2 hold the zeros
    auto b = hungarian(make(3, 2, {1, 5, 0, 2, 4, 0}));
    CHECK(b.pairs == std::vector<std::pair<int, int>>{{1, 0}, {2, 1}});
    CHECK(b.total_cost == 0.0);
}

TEST_CASE("optimality vs brute force on integer and real matrices") {
    Rng rng(99);
    for (int rep = 0; rep < 200; ++rep) {
        const int rows = static_cast<int>(rng.uniform_int(1, 7));
        const int cols = static_cast<int>(rng.uniform_int(rows, 7));
        std::vector<double> v(static_cast<size_t>(rows) * cols);
        const bool integer = rep % 2 == 0;
        for (auto& x : v)
            x = integer ? static_cast<double>(rng.uniform_int(-9, 9)) : rng.uniform(-1, 1);
        auto c = make(rows, cols, v);
        auto got = hungarian(c);
        auto want = oracle::brute_force_assignment(to_oracle(c));
        if (integer) {
            CHECK(got.total_cost == want.cost);
        } else {
            CHECK(got.total_cost == doctest::Approx(want.cost).epsilon(1e-6));
        }
        // pair list sanity: injective, sorted, cost sums to total
        double s = 0;
        std::vector<char> used_col(static_cast<size_t>(cols), 0);
        for (size_t i = 0; i < got.pairs.size(); ++i) {
            auto [r, t] = got.pairs[i];
            CHECK(r == static_cast<int>(i));
            CHECK_FALSE(used_col[static_cast<size_t>(t)]);
            used_col[static_cast<size_t>(t)] = 1;
            s += c.at(r, t);
        }
        CHECK(std::abs(s - got.total_cost) < 1e-5);
    }
}

TEST_CASE("ties break to the lexicographically smallest pair list") {
    // every assignment costs 2: the canonical answer is the identity
    auto a = hungarian(make(3, 3, std::vector<double>(9, 2.0)));
    CHECK(a.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});

    // two optima: (0,0),(1,1) and (0,1),(1,0) both cost 2
    auto b = hungarian(make(2, 2, {1, 1, 1, 1}));
    CHECK(b.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

    // forced anti-diagonal: lexicographic canonicalization must not break optimality
    auto d = hungarian(make(2, 2, {5, 1, 1, 5}));
    CHECK(d.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
}

TEST_CASE("row permutation equivariance") {
    Rng rng(123);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = static_cast<int>(rng.uniform_int(2, 6));
        std::vector<double> v(static_cast<size_t>(n) * n);
        for (auto& x : v) x = rng.uniform(0, 1);
        auto c = make(n, n, v);
        auto base = hungarian(c);

        auto perm = rng.sample_without_replacement(n, n);
        CostMatrix pc = c;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pc.at(i, j) = c.at(perm[static_cast<size_t>(i)], j);
        auto permuted = hungarian(pc);
        CHECK(permuted.total_cost == doctest::Approx(base.total_cost).epsilon(1e-9));
        for (int i = 0; i < n; ++i)
            CHECK(permuted.target_of(i) == base.target_of(perm[static_cast<size_t>(i)]));
    }
}

TEST_CASE("adding a row constant shifts cost and keeps the assignment") {
    Rng rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        const int n = 5;
        std::vector<double> v(n * n);
        for (auto& x : v) x = rng.uniform(0, 1);
        auto c = make(n, n, v);
        auto base = hungarian(c);
        const double k = rng.uniform(-2, 2);
        CostMatrix shifted = c;
        for (int j = 0; j < n; ++j) shifted.at(2, j) += k;
        auto got = hungarian(shifted);
        CHECK(got.total_cost == doctest::Approx(base.total_cost + k).epsilon(1e-9));
        for (int i = 0; i < n; ++i) CHECK(got.target_of(i) == base.target_of(i));
    }
}

TEST_CASE("non-finite cost entries are rejected") {
    CHECK_THROWS_AS(hungarian(make(1, 1, {std::nan("")})), ContractError);
}

TEST_CASE("proposal cost: identical sets match on the diagonal") {
    Rng rng(31);
    RunConfig cfg;
    auto p = random_proposals(5, 8, rng);
    auto c = proposal_cost(p, p, cfg);
    auto a = hungarian(c);
    for (int i = 0; i < 5; ++i) CHECK(a.target_of(i) == i);
    // diagonal entries: cos = 1, zero box losses
    for (int i = 0; i < 5; ++i)
        CHECK(c.at(i, i) == doctest::Approx(-cfg.lambda_sim).epsilon(1e-5));
}

TEST_CASE("proposal cost: swapped pair is unswapped by matching") {
    Rng rng(37);
    RunConfig cfg;
    auto teacher = random_proposals(2, 8, rng);
    ProposalSet student;
    student.embeddings = gather_rows(teacher.embeddings, {1, 0});
    student.boxes.boxes = {teacher.boxes[1], teacher.boxes[0]};
    student.box_tensor = boxes_to_tensor(student.boxes);
    auto a = hungarian(proposal_cost(teacher, student, cfg));
    CHECK(a.target_of(0) == 1);
    CHECK(a.target_of(1) == 0);
}

TEST_CASE("proposal cost equals brute force on random N=5 sets") {
    Rng rng(41);
    RunConfig cfg;
    for (int rep = 0; rep < 20; ++rep) {
        auto teacher = random_proposals(5, 8, rng);
        auto student = random_proposals(5, 8, rng);
        auto c = proposal_cost(teacher, student, cfg);
        auto got = hungarian(c);
        auto want = oracle::brute_force_assignment(to_oracle(c));
        CHECK(got.total_cost == doctest::Approx(want.cost).epsilon(1e-9));
    }
}

TEST_CASE("proposal cost size mismatch throws") {
    Rng rng(43);
    RunConfig cfg;
    auto a = random_proposals(3, 8, rng);
    auto b = random_proposals(4, 8, rng);
    CHECK_THROWS_AS(proposal_cost(a, b, cfg), ContractError);
}

TEST_CASE("proposal cost is detached from the tape") {
    Rng rng(47);
    RunConfig cfg;
    auto teacher = random_proposals(3, 8, rng);
    Tape tape;
    Tape::Scope scope(tape);
    auto student = random_proposals(3, 8, rng);
    const size_t before = tape.size();
    (void)proposal_cost(teacher, student, cfg);
    (void)box_cost(teacher.boxes, student, cfg);
    CHECK(tape.size() == before);
}

TEST_CASE("box cost: subset boxes match at zero cost") {
    Rng rng(53);
    RunConfig cfg;
    auto student = random_proposals(4, 8, rng);
    BoxSet ss;
    ss.boxes = {student.boxes[2], student.boxes[0]};
    auto a = hungarian(box_cost(ss, student, cfg));
    CHECK(a.total_cost == doctest::Approx(0.0));
    CHECK(a.target_of(0) == 2);
    CHECK(a.target_of(1) == 0);
}

TEST_CASE("box cost: K=1 picks the nearest of three") {
    RunConfig cfg;
    ProposalSet student;
    student.boxes.boxes = {BoxN(0.2f, 0.2f, 0.1f, 0.1f), BoxN(0.52f, 0.51f, 0.2f, 0.2f),
                           BoxN(0.8f, 0.8f, 0.1f, 0.1f)};
    student.embeddings = Tensor::zeros({3, 4});
    student.box_tensor = boxes_to_tensor(student.boxes);
    BoxSet ss;
    ss.boxes = {BoxN(0.5f, 0.5f, 0.2f, 0.2f)};
    CHECK(hungarian(box_cost(ss, student, cfg)).target_of(0) == 1);
}

TEST_CASE("box cost equals brute force on K=4 N=6") {
    Rng rng(59);
    RunConfig cfg;
    for (int rep = 0; rep < 20; ++rep) {
        auto student = random_proposals(6, 8, rng);
        BoxSet ss;
        for (int i = 0; i < 4; ++i) ss.boxes.push_back(random_box(rng));
        auto c = box_cost(ss, student, cfg);
        auto got = hungarian(c);
        auto want = oracle::brute_force_assignment(to_oracle(c));
        CHECK(got.total_cost == doctest::Approx(want.cost).epsilon(1e-9));
    }
}

TEST_CASE("box cost rejects K > N") {
    Rng rng(61);
    RunConfig cfg;
    auto student = random_proposals(2, 8, rng);
    BoxSet ss;
    for (int i = 0; i < 3; ++i) ss.boxes.push_back(random_box(rng));
    CHECK_THROWS_AS(box_cost(ss, student, cfg), ContractError);
}
