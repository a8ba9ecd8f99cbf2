#include <gtest/gtest.h>

#include <rmlbo/bench.hpp>

using namespace rmlbo;

namespace {

std::vector<RMLInstance> instances_for(const ProblemSpec& p, int n, std::uint64_t seed)
{
    Rng rng(seed);
    return draw_randomizations(p, n, rng);
}

} // namespace

TEST(RandomDesign, SingleEvaluationIsSharedByAllObjectives)
{
    const auto p = make_problem({"sine-ridge", 10, 2, 2, "uniform", 0.1, 1});
    const auto inst = instances_for(p, 4, 1);
    const RMLResult r = random_design(p, inst, 1, Rng(2));
    ASSERT_EQ(r.trace.size(), 1u);
    for (const auto& s : r.maximizers) {
        EXPECT_EQ(s.record, 0);
        EXPECT_EQ(s.x, r.trace[0].x);
    }
}

TEST(RandomDesign, ExactBudgetAndPriorSupport)
{
    const auto p = make_problem({"quadratic-bowl", 10, 2, 2, "uniform", 0.1, 1});
    const auto inst = instances_for(p, 3, 1);
    const RMLResult r = random_design(p, inst, 37, Rng(2));
    EXPECT_EQ(r.evaluations, 37u);
    EXPECT_EQ(p.simulator.eval_count(), 37u);
    for (const auto& rec : r.trace)
        EXPECT_TRUE(p.box().contains(rec.x));
    EXPECT_TRUE(r.policy.shared);
}

TEST(LocalSearch, PerObjectiveBudget)
{
    const auto p = make_problem({"sine-ridge", 10, 2, 2, "uniform", 0.1, 1});
    const auto inst = instances_for(p, 5, 1);
    const RMLResult r = per_objective_local_search(p, inst, 37, Rng(3));
    EXPECT_EQ(r.evaluations, 35u);
    EXPECT_EQ(p.simulator.eval_count(), 35u);
    std::vector<int> per(5, 0);
    for (const auto& rec : r.trace) {
        ++per[static_cast<std::size_t>(rec.objective_index - 1)];
        EXPECT_TRUE(p.box().contains(rec.x));
    }
    for (int c : per)
        EXPECT_EQ(c, 7);
    EXPECT_FALSE(r.policy.shared);
    for (const auto& s : r.maximizers)
        EXPECT_EQ(r.trace[static_cast<std::size_t>(s.record)].objective_index, s.objective);
}

TEST(LocalSearch, ConvergesOnTwoDimensionalQuadratic)
{
    // Linear simulator with a Gaussian prior: each objective is a concave
    // quadratic whose maximizer is known in closed form.
    const auto p = make_problem({"quadratic-bowl", 2, 2, 2, "gaussian", 0.3, 4});
    const auto inst = instances_for(p, 1, 2);
    const RMLResult r = per_objective_local_search(p, inst, 200, Rng(5));
    const Vector exact = oracle_linear_rml(*p.simulator.linear_map(), inst[0], p);
    EXPECT_LT((r.maximizers[0].x - exact).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Baselines, NeverBeatTheLinearOracle)
{
    const auto p = make_problem({"linear-gaussian", 6, 0, 4, "gaussian", 0.2, 3});
    const auto inst = instances_for(p, 5, 7);
    const Matrix& b = *p.simulator.linear_map();
    for (const RMLResult& r : {random_design(p, inst, 100, Rng(1)), per_objective_local_search(p, inst, 100, Rng(1))})
        for (std::size_t n = 0; n < inst.size(); ++n) {
            const Vector xs = oracle_linear_rml(b, inst[n], p);
            EXPECT_LE(r.maximizers[n].value, objective(inst[n], xs, p, Vector(b * xs)) + 1e-12) << r.method;
        }
}

TEST(Baselines, DeterministicForFixedSeed)
{
    const auto p = make_problem({"rosenbrock-2d", 8, 2, 2, "gaussian", 0.1, 3});
    const auto inst = instances_for(p, 3, 7);
    const auto a = random_design(p, inst, 30, Rng(9)), b = random_design(p, inst, 30, Rng(9));
    const auto c = per_objective_local_search(p, inst, 30, Rng(9)), d = per_objective_local_search(p, inst, 30, Rng(9));
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        EXPECT_EQ(a.trace[i].x, b.trace[i].x);
    for (std::size_t i = 0; i < c.trace.size(); ++i)
        EXPECT_EQ(c.trace[i].x, d.trace[i].x);
}
