#include "netsec/channel.hpp"

#include <memory>

namespace netsec {

using simnet::Action;
using simnet::Layer;

std::optional<Term> DirectChannel::deliver(const std::string& from, const std::string& to, const std::string& label,
                                           const Term& msg) {
  trace_.push_back({clock_, from, Action::Send, Layer::Application, label + " to=" + to + " " + msg.render(), msg});
  std::optional<Term> got = msg;
  if (tamper_) got = tamper_(label, msg);
  clock_ += latency_;
  if (!got) {
    trace_.push_back({clock_, to, Action::Drop, Layer::Application, label + " lost", std::nullopt});
    return std::nullopt;
  }
  trace_.push_back({clock_, to, Action::Recv, Layer::Application, label + " from=" + from + " " + got->render(),
                    std::nullopt});
  log_.push_back({from, to, label, msg, *got});
  return got;
}

void DirectChannel::note(const std::string& node, const std::string& text) {
  trace_.push_back({clock_, node, Action::Note, Layer::Application, text, std::nullopt});
}

DirectChannel::Tamper tamper_nth(std::size_t n, symcrypto::Key adversary_key) {
  auto count = std::make_shared<std::size_t>(0);
  return [n, count, adversary_key](const std::string&, const Term& msg) -> std::optional<Term> {
    if ((*count)++ == n) return symcrypto::tamper(msg, adversary_key);
    return msg;
  };
}

}  // namespace netsec
