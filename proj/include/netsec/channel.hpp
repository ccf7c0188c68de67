#pragma once

// Message transport for the handshake protocols. A channel moves one term from
// one principal to another and may be observed or tampered with on the way.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "netsec/simnet.hpp"
#include "netsec/symcrypto.hpp"

namespace netsec {

class Channel {
 public:
  virtual ~Channel() = default;
  /// Returns what `to` actually receives, or nothing when the message is lost.
  virtual std::optional<Term> deliver(const std::string& from, const std::string& to, const std::string& label,
                                      const Term& msg) = 0;
  virtual void note(const std::string& node, const std::string& text) = 0;
  virtual std::uint64_t now() const = 0;
};

struct ChannelRecord {
  std::string from;
  std::string to;
  std::string label;
  Term sent;
  Term received;
};

/// In-memory channel with an explicit clock; records every message as trace
/// events so secrecy predicates can be checked the same way as on a network.
class DirectChannel : public Channel {
 public:
  /// Gets the message label and the term in flight; returns the replacement.
  using Tamper = std::function<std::optional<Term>(const std::string& label, const Term& msg)>;

  explicit DirectChannel(std::uint64_t start = 0) : clock_(start) {}

  std::optional<Term> deliver(const std::string& from, const std::string& to, const std::string& label,
                              const Term& msg) override;
  void note(const std::string& node, const std::string& text) override;
  std::uint64_t now() const override { return clock_; }

  void set_time(std::uint64_t t) { clock_ = t; }
  void advance(std::uint64_t dt) { clock_ += dt; }
  void set_tamper(Tamper t) { tamper_ = std::move(t); }
  /// When set, each message takes one tick.
  void set_latency(std::uint64_t ticks) { latency_ = ticks; }

  const std::vector<ChannelRecord>& log() const { return log_; }
  const simnet::Trace& trace() const { return trace_; }

 private:
  std::uint64_t clock_;
  std::uint64_t latency_ = 0;
  Tamper tamper_;
  std::vector<ChannelRecord> log_;
  simnet::Trace trace_;
};

/// Tamper function that applies symcrypto::tamper to the n-th message only
/// (0-based), counted over all messages the channel carries.
DirectChannel::Tamper tamper_nth(std::size_t n, symcrypto::Key adversary_key);

}  // namespace netsec
