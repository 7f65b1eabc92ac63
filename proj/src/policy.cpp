// SPDX-License-Identifier: Apache-2.0
#include "april/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "april/errors.hpp"
#include "april/subprocess.hpp"

namespace april {

using nlohmann::json;

double PolicySample::total_logprob() const { return std::accumulate(logprobs.begin(), logprobs.end(), 0.0); }

namespace {

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

ToySoftmaxPolicy::ToySoftmaxPolicy(std::vector<std::string> vocabulary, std::size_t length,
                                   std::vector<std::string> contexts, double temperature)
    : vocab_(std::move(vocabulary)), length_(length), contexts_(std::move(contexts)), temperature_(temperature) {
  if (vocab_.empty() || vocab_.size() > 32) throw ValidationError("toy vocabulary must hold 1..32 symbols");
  if (length_ < 1 || length_ > 8) throw ValidationError("toy sequence length must be 1..8");
  if (contexts_.empty()) throw ValidationError("toy policy needs at least one context");
  if (std::set<std::string>(contexts_.begin(), contexts_.end()).size() != contexts_.size()) {
    throw ValidationError("toy policy contexts must be distinct");
  }
  if (std::set<std::string>(vocab_.begin(), vocab_.end()).size() != vocab_.size()) {
    throw ValidationError("toy vocabulary symbols must be distinct");
  }
  if (!(temperature_ > 0.0)) throw ValidationError("temperature must be > 0");
  theta_.assign(contexts_.size() * length_ * vocab_.size(), 0.0);
}

std::string ToySoftmaxPolicy::id() const {
  return "toy-softmax/v" + std::to_string(vocab_.size()) + "/l" + std::to_string(length_);
}

std::size_t ToySoftmaxPolicy::context_index(const std::string& context) const {
  auto it = std::find(contexts_.begin(), contexts_.end(), context);
  if (it == contexts_.end()) throw ValidationError("toy policy has no context '" + context + "'");
  return static_cast<std::size_t>(it - contexts_.begin());
}

std::vector<double> ToySoftmaxPolicy::log_softmax(const std::vector<double>& theta, std::size_t ctx,
                                                  std::size_t position) const {
  std::size_t off = offset(ctx, position);
  std::vector<double> z(vocab_.size());
  for (std::size_t v = 0; v < z.size(); ++v) z[v] = theta[off + v] / temperature_;
  double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - m);
  double lse = m + std::log(s);
  for (double& x : z) x -= lse;
  return z;
}

std::vector<double> ToySoftmaxPolicy::distribution(const std::string& context, std::size_t position) const {
  if (position >= length_) throw ValidationError("position out of range");
  std::vector<double> lp = log_softmax(theta_, context_index(context), position);
  for (double& x : lp) x = std::exp(x);
  return lp;
}

PolicySample ToySoftmaxPolicy::sample(const std::string& context, double top_p, std::uint64_t seed) const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
  std::size_t ctx = context_index(context);
  std::mt19937_64 rng(seed);
  PolicySample out;
  for (std::size_t pos = 0; pos < length_; ++pos) {
    std::vector<double> lp = log_softmax(theta_, ctx, pos);
    std::vector<std::size_t> order(vocab_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lp[a] > lp[b]; });
    // Smallest high-probability prefix reaching top_p.
    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < order.size() && (keep == 0 || mass < top_p)) mass += std::exp(lp[order[keep++]]);
    double u = unit_draw(rng) * mass;
    std::size_t pick = order[keep - 1];
    double acc = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
      acc += std::exp(lp[order[i]]);
      if (u < acc) {
        pick = order[i];
        break;
      }
    }
    out.tokens.push_back(static_cast<int>(pick));
    out.logprobs.push_back(lp[pick]);
  }
  return out;
}

std::vector<double> ToySoftmaxPolicy::logprob(const std::string& context, const Tokens& tokens) const {
  if (tokens.size() != length_) throw ValidationError("token sequence has the wrong length");
  std::size_t ctx = context_index(context);
  std::vector<double> out;
  for (std::size_t pos = 0; pos < length_; ++pos) {
    int t = tokens[pos];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) throw ValidationError("token out of vocabulary");
    out.push_back(log_softmax(theta_, ctx, pos)[static_cast<std::size_t>(t)]);
  }
  return out;
}

std::string ToySoftmaxPolicy::decode(const Tokens& tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) throw ValidationError("token out of vocabulary");
    out += vocab_[static_cast<std::size_t>(t)];
  }
  return out;
}

Tokens ToySoftmaxPolicy::encode(std::string_view text) const {
  Tokens out;
  while (!text.empty()) {
    bool matched = false;
    for (std::size_t v = 0; v < vocab_.size(); ++v) {
      if (!vocab_[v].empty() && text.substr(0, vocab_[v].size()) == vocab_[v]) {
        out.push_back(static_cast<int>(v));
        text.remove_prefix(vocab_[v].size());
        matched = true;
        break;
      }
    }
    if (!matched) throw ValidationError("text contains a symbol outside the vocabulary");
  }
  return out;
}

void ToySoftmaxPolicy::set_parameters(const std::vector<double>& theta) {
  if (theta.size() != theta_.size()) throw ValidationError("parameter vector has the wrong size");
  theta_ = theta;
}

std::unique_ptr<Policy> ToySoftmaxPolicy::clone() const { return std::make_unique<ToySoftmaxPolicy>(*this); }

std::vector<double> ToySoftmaxPolicy::grad_logprob(const std::string& context, const Tokens& tokens) const {
  if (tokens.size() != length_) throw ValidationError("token sequence has the wrong length");
  std::size_t ctx = context_index(context);
  std::vector<double> g(theta_.size(), 0.0);
  for (std::size_t pos = 0; pos < length_; ++pos) {
    std::vector<double> lp = log_softmax(theta_, ctx, pos);
    std::size_t off = offset(ctx, pos);
    for (std::size_t v = 0; v < vocab_.size(); ++v) {
      double indicator = static_cast<int>(v) == tokens[pos] ? 1.0 : 0.0;
      g[off + v] += (indicator - std::exp(lp[v])) / temperature_;
    }
  }
  return g;
}

double ToySoftmaxPolicy::kl(const std::vector<double>& ref_theta, const std::vector<std::string>& contexts) const {
  if (ref_theta.size() != theta_.size()) throw ValidationError("reference parameters have the wrong size");
  if (contexts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : contexts) {
    std::size_t ctx = context_index(c);
    for (std::size_t pos = 0; pos < length_; ++pos) {
      std::vector<double> lp = log_softmax(theta_, ctx, pos);
      std::vector<double> lr = log_softmax(ref_theta, ctx, pos);
      double k = 0.0;
      for (std::size_t v = 0; v < vocab_.size(); ++v) k += std::exp(lp[v]) * (lp[v] - lr[v]);
      total += std::max(0.0, k);
    }
  }
  return total / static_cast<double>(contexts.size() * length_);
}

std::vector<double> ToySoftmaxPolicy::kl_gradient(const std::vector<double>& ref_theta,
                                                  const std::vector<std::string>& contexts) const {
  if (ref_theta.size() != theta_.size()) throw ValidationError("reference parameters have the wrong size");
  std::vector<double> g(theta_.size(), 0.0);
  if (contexts.empty()) return g;
  double scale = 1.0 / static_cast<double>(contexts.size() * length_);
  for (const auto& c : contexts) {
    std::size_t ctx = context_index(c);
    for (std::size_t pos = 0; pos < length_; ++pos) {
      std::vector<double> lp = log_softmax(theta_, ctx, pos);
      std::vector<double> lr = log_softmax(ref_theta, ctx, pos);
      double k = 0.0;
      for (std::size_t v = 0; v < vocab_.size(); ++v) k += std::exp(lp[v]) * (lp[v] - lr[v]);
      std::size_t off = offset(ctx, pos);
      // dKL/dz_k = p_k (log p_k - log r_k - KL), z = theta / T.
      for (std::size_t v = 0; v < vocab_.size(); ++v) {
        g[off + v] += scale * std::exp(lp[v]) * (lp[v] - lr[v] - k) / temperature_;
      }
    }
  }
  return g;
}

json ToySoftmaxPolicy::to_json() const {
  return {{"vocabulary", vocab_},
          {"length", length_},
          {"contexts", contexts_},
          {"temperature", temperature_},
          {"theta", theta_}};
}

ToySoftmaxPolicy ToySoftmaxPolicy::from_json(const json& j) {
  try {
    ToySoftmaxPolicy p(j.at("vocabulary").get<std::vector<std::string>>(), j.at("length").get<std::size_t>(),
                       j.at("contexts").get<std::vector<std::string>>(), j.value("temperature", 0.7));
    if (j.contains("theta")) p.set_parameters(j.at("theta").get<std::vector<double>>());
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("toy policy: ") + e.what());
  }
}

// External policy ------------------------------------------------------------

ExternalPolicy::ExternalPolicy(std::vector<std::string> command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  if (command_.empty()) throw EnvironmentError("no external policy command configured");
  json init = call({{"op", "init"}, {"theta", nullptr}});
  try {
    theta_ = init.at("theta").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ShimProtocolError(std::string("init reply: ") + e.what());
  }
}

json ExternalPolicy::call(json request) const {
  if (!request.contains("theta")) request["theta"] = theta_;
  ProcessOutcome proc = run_process(command_, std::filesystem::current_path(), {}, request.dump(), timeout_);
  if (proc.timed_out) throw ShimProtocolError("external policy timed out on op " + request.value("op", std::string{}));
  json reply;
  try {
    reply = json::parse(proc.out);
  } catch (const json::parse_error&) {
    throw ShimProtocolError("external policy exited with code " + std::to_string(proc.exit_code) +
                            " and unparseable stdout");
  }
  if (!reply.is_object()) throw ShimProtocolError("external policy reply is not an object");
  if (reply.contains("error")) throw ShimProtocolError("external policy: " + reply.at("error").dump());
  return reply;
}

namespace {

template <typename T>
T field(const json& reply, const char* key) {
  try {
    return reply.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ShimProtocolError(std::string("external policy reply field '") + key + "': " + e.what());
  }
}

}  // namespace

PolicySample ExternalPolicy::sample(const std::string& context, double top_p, std::uint64_t seed) const {
  json r = call({{"op", "sample"}, {"context", context}, {"top_p", top_p}, {"seed", seed}});
  return {field<Tokens>(r, "tokens"), field<std::vector<double>>(r, "logprobs")};
}

std::vector<double> ExternalPolicy::logprob(const std::string& context, const Tokens& tokens) const {
  return field<std::vector<double>>(call({{"op", "logprob"}, {"context", context}, {"tokens", tokens}}), "logprobs");
}

std::string ExternalPolicy::decode(const Tokens& tokens) const {
  return field<std::string>(call({{"op", "decode"}, {"tokens", tokens}}), "text");
}

std::unique_ptr<Policy> ExternalPolicy::clone() const { return std::make_unique<ExternalPolicy>(*this); }

std::vector<double> ExternalPolicy::grad_logprob(const std::string& context, const Tokens& tokens) const {
  return field<std::vector<double>>(call({{"op", "grad_logprob"}, {"context", context}, {"tokens", tokens}}),
                                    "gradient");
}

double ExternalPolicy::kl(const std::vector<double>& ref_theta, const std::vector<std::string>& contexts) const {
  return field<double>(call({{"op", "kl"}, {"ref_theta", ref_theta}, {"contexts", contexts}}), "kl");
}

std::vector<double> ExternalPolicy::kl_gradient(const std::vector<double>& ref_theta,
                                                const std::vector<std::string>& contexts) const {
  return field<std::vector<double>>(
      call({{"op", "kl_gradient"}, {"ref_theta", ref_theta}, {"contexts", contexts}}), "gradient");
}

json serve_toy_request(const ToySoftmaxPolicy& prototype, const json& request) {
  ToySoftmaxPolicy policy = prototype;
  std::string op = request.value("op", std::string{});
  if (request.contains("theta") && !request.at("theta").is_null()) {
    policy.set_parameters(request.at("theta").get<std::vector<double>>());
  }
  if (op == "init") return {{"theta", policy.parameters()}, {"id", policy.id()}};
  if (op == "sample") {
    PolicySample s = policy.sample(request.at("context").get<std::string>(), request.value("top_p", 1.0),
                                   request.at("seed").get<std::uint64_t>());
    return {{"tokens", s.tokens}, {"logprobs", s.logprobs}};
  }
  if (op == "logprob") {
    return {{"logprobs", policy.logprob(request.at("context").get<std::string>(), request.at("tokens").get<Tokens>())}};
  }
  if (op == "decode") return {{"text", policy.decode(request.at("tokens").get<Tokens>())}};
  if (op == "grad_logprob") {
    return {{"gradient",
             policy.grad_logprob(request.at("context").get<std::string>(), request.at("tokens").get<Tokens>())}};
  }
  auto ref = [&] { return request.at("ref_theta").get<std::vector<double>>(); };
  auto contexts = [&] { return request.at("contexts").get<std::vector<std::string>>(); };
  if (op == "kl") return {{"kl", policy.kl(ref(), contexts())}};
  if (op == "kl_gradient") return {{"gradient", policy.kl_gradient(ref(), contexts())}};
  throw ShimProtocolError("unknown op '" + op + "'");
}

}  // namespace april
