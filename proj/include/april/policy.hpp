// SPDX-License-Identifier: Apache-2.0
//
// Policies trained by the RLVR loop. The toy softmax policy keeps one logit
// table per (context, position); the external policy forwards every call to
// a subprocess that reads one JSON request and writes one JSON reply.
#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace april {

using Tokens = std::vector<int>;

struct PolicySample {
  Tokens tokens;
  std::vector<double> logprobs;  // per token, under the current parameters

  double total_logprob() const;
};

class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string id() const = 0;
  /// Seeded draw; top_p truncates the nucleus at sampling time only.
  virtual PolicySample sample(const std::string& context, double top_p, std::uint64_t seed) const = 0;
  virtual std::vector<double> logprob(const std::string& context, const Tokens& tokens) const = 0;
  virtual std::string decode(const Tokens& tokens) const = 0;

  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(const std::vector<double>& theta) = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;

  /// d/dtheta of the summed token logprob.
  virtual std::vector<double> grad_logprob(const std::string& context, const Tokens& tokens) const = 0;
  /// KL(pi_theta || pi_ref) averaged over positions and the given contexts.
  virtual double kl(const std::vector<double>& ref_theta, const std::vector<std::string>& contexts) const = 0;
  virtual std::vector<double> kl_gradient(const std::vector<double>& ref_theta,
                                          const std::vector<std::string>& contexts) const = 0;
};

/// pi(v | context, position) = softmax(theta[context][position] / temperature).
class ToySoftmaxPolicy final : public Policy {
 public:
  ToySoftmaxPolicy(std::vector<std::string> vocabulary, std::size_t length, std::vector<std::string> contexts,
                   double temperature = 0.7);

  std::string id() const override;
  PolicySample sample(const std::string& context, double top_p, std::uint64_t seed) const override;
  std::vector<double> logprob(const std::string& context, const Tokens& tokens) const override;
  std::string decode(const Tokens& tokens) const override;
  /// Inverse of decode; throws ValidationError on unknown symbols.
  Tokens encode(std::string_view text) const;

  std::vector<double> parameters() const override { return theta_; }
  void set_parameters(const std::vector<double>& theta) override;
  std::unique_ptr<Policy> clone() const override;

  std::vector<double> grad_logprob(const std::string& context, const Tokens& tokens) const override;
  double kl(const std::vector<double>& ref_theta, const std::vector<std::string>& contexts) const override;
  std::vector<double> kl_gradient(const std::vector<double>& ref_theta,
                                  const std::vector<std::string>& contexts) const override;

  /// Probabilities at one (context, position).
  std::vector<double> distribution(const std::string& context, std::size_t position) const;

  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t length() const { return length_; }
  double temperature() const { return temperature_; }
  const std::vector<std::string>& contexts() const { return contexts_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  nlohmann::json to_json() const;
  static ToySoftmaxPolicy from_json(const nlohmann::json& j);

 private:
  std::size_t context_index(const std::string& context) const;
  std::size_t offset(std::size_t ctx, std::size_t position) const { return (ctx * length_ + position) * vocab_.size(); }
  std::vector<double> log_softmax(const std::vector<double>& theta, std::size_t ctx, std::size_t position) const;

  std::vector<std::string> vocab_;
  std::size_t length_;
  std::vector<std::string> contexts_;
  double temperature_;
  std::vector<double> theta_;
};

/// Adapter for a policy living in another process. Each call spawns the
/// command with one JSON request {op, context?, tokens?, theta, ...} on
/// stdin and reads one JSON response. Ops: init, sample, logprob,
/// grad_logprob, kl, kl_gradient, decode.
class ExternalPolicy final : public Policy {
 public:
  ExternalPolicy(std::vector<std::string> command, std::chrono::milliseconds timeout = std::chrono::seconds(60));

  std::string id() const override { return "external:" + command_.front(); }
  PolicySample sample(const std::string& context, double top_p, std::uint64_t seed) const override;
  std::vector<double> logprob(const std::string& context, const Tokens& tokens) const override;
  std::string decode(const Tokens& tokens) const override;

  std::vector<double> parameters() const override { return theta_; }
  void set_parameters(const std::vector<double>& theta) override { theta_ = theta; }
  std::unique_ptr<Policy> clone() const override;

  std::vector<double> grad_logprob(const std::string& context, const Tokens& tokens) const override;
  double kl(const std::vector<double>& ref_theta, const std::vector<std::string>& contexts) const override;
  std::vector<double> kl_gradient(const std::vector<double>& ref_theta,
                                  const std::vector<std::string>& contexts) const override;

  /// One round trip; throws ShimProtocolError on a malformed or error reply.
  nlohmann::json call(nlohmann::json request) const;

 private:
  std::vector<std::string> command_;
  std::chrono::milliseconds timeout_;
  std::vector<double> theta_;
};

/// Serves one external-policy request with a toy policy (the adapter's
/// reference implementation).
nlohmann::json serve_toy_request(const ToySoftmaxPolicy& prototype, const nlohmann::json& request);

}  // namespace april
