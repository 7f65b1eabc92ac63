// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "april/errors.hpp"
#include "april/policy.hpp"
#include "april/toy_domain.hpp"
#include "test_support.hpp"

using namespace april;
using nlohmann::json;

namespace {

ToySoftmaxPolicy random_policy(std::uint64_t seed, double scale = 1.0) {
  ToySoftmaxPolicy p({"a", "b", "c"}, 2, {"x", "y"}, 0.7);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> theta = p.parameters();
  for (auto& t : theta) t = n(rng);
  p.set_parameters(theta);
  return p;
}

}  // namespace

TEST(ToyPolicy, ZeroParametersGiveUniformDistributions) {
  ToySoftmaxPolicy p = toy_policy();
  for (double q : p.distribution("toy_0", 0)) EXPECT_DOUBLE_EQ(q, 0.25);
  EXPECT_EQ(p.parameters().size(), 5u * 3u * 4u);
}

TEST(ToyPolicy, DistributionIsTemperatureScaledSoftmax) {
  ToySoftmaxPolicy p({"a", "b"}, 1, {"x"}, 0.5);
  p.set_parameters({1.0, 0.0});
  std::vector<double> d = p.distribution("x", 0);
  double expected = std::exp(2.0) / (std::exp(2.0) + 1.0);
  EXPECT_NEAR(d[0], expected, 1e-12);
  EXPECT_NEAR(d[0] + d[1], 1.0, 1e-12);
}

TEST(ToyPolicy, LogprobMatchesDistribution) {
  ToySoftmaxPolicy p = random_policy(3);
  std::vector<double> lp = p.logprob("y", {2, 0});
  EXPECT_NEAR(lp[0], std::log(p.distribution("y", 0)[2]), 1e-12);
  EXPECT_NEAR(lp[1], std::log(p.distribution("y", 1)[0]), 1e-12);
}

TEST(ToyPolicy, SamplingIsSeededAndReportsFullSupportLogprobs) {
  ToySoftmaxPolicy p = random_policy(4);
  PolicySample a = p.sample("x", 1.0, 99), b = p.sample("x", 1.0, 99);
  EXPECT_EQ(a.tokens, b.tokens);
  std::vector<double> lp = p.logprob("x", a.tokens);
  for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_DOUBLE_EQ(a.logprobs[i], lp[i]);
  EXPECT_NEAR(a.total_logprob(), std::accumulate(lp.begin(), lp.end(), 0.0), 1e-12);
}

TEST(ToyPolicy, TopPKeepsOnlyTheNucleus) {
  ToySoftmaxPolicy p({"a", "b", "c", "d"}, 1, {"x"}, 1.0);
  p.set_parameters({3.0, 0.0, 0.0, 0.0});  // 'a' holds about 87% of the mass
  for (std::uint64_t s = 0; s < 200; ++s) EXPECT_EQ(p.sample("x", 0.5, s).tokens[0], 0);
  std::set<int> seen;
  for (std::uint64_t s = 0; s < 400; ++s) seen.insert(p.sample("x", 1.0, s).tokens[0]);
  EXPECT_GT(seen.size(), 1u);
  EXPECT_THROW(p.sample("x", 0.0, 1), ValidationError);
}

TEST(ToyPolicy, GradLogprobMatchesFiniteDifferences) {
  ToySoftmaxPolicy p = random_policy(5);
  Tokens tokens = {1, 2};
  std::vector<double> g = p.grad_logprob("y", tokens);
  std::vector<double> theta = p.parameters();
  const double h = 1e-6;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    auto tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    p.set_parameters(tp);
    auto lp = p.logprob("y", tokens);
    p.set_parameters(tm);
    auto lm = p.logprob("y", tokens);
    double fd = (std::accumulate(lp.begin(), lp.end(), 0.0) - std::accumulate(lm.begin(), lm.end(), 0.0)) / (2 * h);
    EXPECT_NEAR(g[j], fd, 1e-7) << "parameter " << j;
  }
}

TEST(ToyPolicy, KlIsZeroAgainstItselfAndPositiveOtherwise) {
  ToySoftmaxPolicy p = random_policy(6);
  EXPECT_EQ(p.kl(p.parameters(), {"x", "y"}), 0.0);
  ToySoftmaxPolicy q = random_policy(7);
  EXPECT_GT(p.kl(q.parameters(), {"x", "y"}), 0.0);
}

TEST(ToyPolicy, KlGradientMatchesFiniteDifferences) {
  ToySoftmaxPolicy p = random_policy(8);
  std::vector<double> ref = random_policy(9).parameters();
  std::vector<std::string> ctx = {"x"};
  std::vector<double> g = p.kl_gradient(ref, ctx);
  std::vector<double> theta = p.parameters();
  const double h = 1e-6;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    auto tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    p.set_parameters(tp);
    double kp = p.kl(ref, ctx);
    p.set_parameters(tm);
    double km = p.kl(ref, ctx);
    EXPECT_NEAR(g[j], (kp - km) / (2 * h), 1e-7) << "parameter " << j;
  }
  // Parameters of contexts outside the average get no gradient.
  for (std::size_t j = theta.size() / 2; j < theta.size(); ++j) EXPECT_EQ(g[j], 0.0);
}

TEST(ToyPolicy, EncodeDecodeAndJson) {
  ToySoftmaxPolicy p = random_policy(10);
  EXPECT_EQ(p.decode(p.encode("ca")), "ca");
  EXPECT_THROW(p.encode("cz"), ValidationError);
  ToySoftmaxPolicy back = ToySoftmaxPolicy::from_json(p.to_json());
  EXPECT_EQ(back.parameters(), p.parameters());
  EXPECT_EQ(back.contexts(), p.contexts());
  EXPECT_DOUBLE_EQ(back.temperature(), p.temperature());
}

TEST(ToyPolicy, ConstructionChecks) {
  EXPECT_THROW(ToySoftmaxPolicy({}, 2, {"x"}), ValidationError);
  EXPECT_THROW(ToySoftmaxPolicy({"a"}, 9, {"x"}), ValidationError);
  EXPECT_THROW(ToySoftmaxPolicy({"a"}, 2, {"x", "x"}), ValidationError);
  EXPECT_THROW(ToySoftmaxPolicy({"a"}, 2, {"x"}, 0.0), ValidationError);
  ToySoftmaxPolicy p({"a", "b"}, 2, {"x"});
  EXPECT_THROW(p.logprob("nope", {0, 0}), ValidationError);
  EXPECT_THROW(p.logprob("x", {0}), ValidationError);
  EXPECT_THROW(p.set_parameters({1.0}), ValidationError);
}

TEST(ToyPolicy, CloneIsIndependent) {
  ToySoftmaxPolicy p = random_policy(11);
  auto c = p.clone();
  std::vector<double> theta = p.parameters();
  theta[0] += 1.0;
  p.set_parameters(theta);
  EXPECT_NE(c->parameters()[0], p.parameters()[0]);
}

TEST(ToyDomain, TargetsPassOnlyTheirOwnSuite) {
  auto tasks = toy_tasks();
  ASSERT_EQ(tasks.size(), 5u);
  auto sandbox = april::testing::stub_sandbox();
  for (const auto& t : tasks) {
    for (const auto& target : toy_targets()) {
      SandboxResult r = sandbox->run_candidate(april::testing::make_job(target.target, t.validation));
      EXPECT_EQ(r.classification == Classification::kAllPass, target.task_id == t.task.id);
    }
  }
}

// External policy over the stub adapter ------------------------------------------

TEST(ExternalPolicy, MatchesTheToyPolicyItWraps) {
  ExternalPolicy ext({april::testing::stub_policy_path()}, std::chrono::seconds(20));
  ToySoftmaxPolicy toy = toy_policy();
  ASSERT_EQ(ext.parameters().size(), toy.parameters().size());

  std::vector<double> theta = toy.parameters();
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& t : theta) t = n(rng);
  toy.set_parameters(theta);
  ext.set_parameters(theta);

  PolicySample a = ext.sample("toy_2", 1.0, 5), b = toy.sample("toy_2", 1.0, 5);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(ext.decode(a.tokens), toy.decode(b.tokens));
  auto le = ext.logprob("toy_2", a.tokens), lt = toy.logprob("toy_2", a.tokens);
  for (std::size_t i = 0; i < le.size(); ++i) EXPECT_NEAR(le[i], lt[i], 1e-12);
  auto ge = ext.grad_logprob("toy_2", a.tokens), gt = toy.grad_logprob("toy_2", a.tokens);
  for (std::size_t i = 0; i < ge.size(); ++i) EXPECT_NEAR(ge[i], gt[i], 1e-12);
  std::vector<double> ref(theta.size(), 0.0);
  EXPECT_NEAR(ext.kl(ref, {"toy_0", "toy_2"}), toy.kl(ref, {"toy_0", "toy_2"}), 1e-12);
  auto ke = ext.kl_gradient(ref, {"toy_0"}), kt = toy.kl_gradient(ref, {"toy_0"});
  for (std::size_t i = 0; i < ke.size(); ++i) EXPECT_NEAR(ke[i], kt[i], 1e-12);
}

TEST(ExternalPolicy, ErrorsAreProtocolErrors) {
  ExternalPolicy ext({april::testing::stub_policy_path()}, std::chrono::seconds(20));
  EXPECT_THROW(ext.call({{"op", "fly"}}), ShimProtocolError);
  EXPECT_THROW(ext.logprob("no_such_task", {0, 0, 0}), ShimProtocolError);
  EXPECT_THROW(ExternalPolicy({"sh", "-c", "echo not-json"}), ShimProtocolError);
}

TEST(ExternalPolicy, ServeToyRequestDirectly) {
  json reply = serve_toy_request(toy_policy(), {{"op", "decode"}, {"tokens", {0, 1, 2}}});
  EXPECT_EQ(reply.at("text"), "abc");
  json init = serve_toy_request(toy_policy(), {{"op", "init"}});
  EXPECT_EQ(init.at("theta").size(), 60u);
}
