#pragma once

// Packet filter, stateful inspection, application proxy and personal firewall,
// plus the screening-router -> proxy -> personal layering and the hooks that
// put them on an Internetwork.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netsec/stack.hpp"

namespace netsec::firewall {

using stack::Internetwork;

enum class Direction { Ingress, Egress };
enum class Verdict { Allow, Deny };
std::string_view to_string(Direction d);
std::string_view to_string(Verdict v);

struct Decision {
  Verdict verdict = Verdict::Allow;
  std::string reason;  // "rule 10", "default", "spoof", "no-connection", ...
  bool allowed() const { return verdict == Verdict::Allow; }
  std::string render() const;
};

// ---------------------------------------------------------------------------
// Packet filter

struct PortRange {
  std::uint16_t lo = 0;
  std::uint16_t hi = 65535;
  bool any() const { return lo == 0 && hi == 65535; }
  bool contains(std::uint16_t p) const { return lo <= p && p <= hi; }
  /// "*", "80" or "1024-2048". Throws SyntaxError.
  static PortRange parse(const std::string& text);
  std::string to_string() const;
};

struct FirewallRule {
  int position = 0;
  Direction direction = Direction::Ingress;
  Verdict action = Verdict::Deny;
  std::optional<std::uint8_t> protocol;  // nullopt: any
  std::optional<Prefix> src;
  PortRange src_ports;
  std::optional<Prefix> dst;
  PortRange dst_ports;

  bool matches(const IpDatagram& d, Direction dir) const;
  std::string to_string() const;
};

struct Ruleset {
  Verdict default_policy = Verdict::Deny;
  std::vector<FirewallRule> rules;      // kept sorted by position
  std::vector<Prefix> protected_nets;   // ingress sources inside these are spoofed

  void add(FirewallRule r);
  /// `default deny|allow` first, then `pos direction allow|deny proto src sports dst dports`
  /// lines, plus `protect <prefix>` lines. `#` starts a comment. Throws SyntaxError.
  static Ruleset parse(const std::string& text);
  std::string to_text() const;
};

/// First match wins, then the default policy. Ingress traffic claiming an
/// internal source is refused before any rule is consulted.
Decision filter_eval(const Ruleset& rules, const IpDatagram& d, Direction dir);

// ---------------------------------------------------------------------------
// Stateful inspection

struct ConnEntry {
  stack::TcpState state = stack::TcpState::SynSent;
  std::uint64_t bytes_out = 0;
};

struct ConnState {
  std::map<stack::Quad, ConnEntry> table;          // keyed by initiator
  std::map<IpAddr, int> per_ip_conn_count;         // by initiator address
  std::map<std::pair<IpAddr, IpAddr>, std::uint64_t> bytes_to_dest;  // (inside host, outside destination)
  int max_conns_per_ip = 3;
  std::uint64_t max_bytes_to_dest = 1000;

  /// per_ip_conn_count agrees with the table.
  bool consistent() const;
};

/// Non-TCP traffic passes. Egress data counts against the byte cap.
Decision stateful_eval(ConnState& state, const IpDatagram& d, Direction dir);

// ---------------------------------------------------------------------------
// Content inspection, proxy and personal firewall

struct ServiceRules {
  std::vector<std::string> banned_tokens;
};

/// Deny(content) when any readable plaintext in the payload carries a banned token.
Decision content_eval(const ServiceRules& rules, const IpDatagram& d);

/// A dual-homed relay: the requester talks to the proxy's near address, the
/// proxy talks to the real server from its far address.
struct ProxyBinding {
  std::string service;
  std::string proxy;     // node
  IpAddr near_ip;        // proxy address the requester uses
  IpAddr far_ip;         // proxy address the real server sees
  std::string server;    // real server node
  std::uint16_t port = 0;
  ServiceRules rules;
};

struct RelayResult {
  Term response;
  IpAddr server_saw;  // source address at the real server
};

using ServerApp = std::function<Term(const Term& request)>;

/// Runs one request/response through the proxy. Throws PolicyViolation
/// (after recording a DROP at the proxy) when either direction is refused.
RelayResult proxy_relay(Internetwork& inet, const ProxyBinding& b, const std::string& client, const Term& request,
                        const ServerApp& app);

struct PersonalPolicy {
  std::vector<Prefix> allowed_sites;  // empty: every site not blocked
  std::vector<Prefix> blocked_sites;
  bool scan = false;
  std::vector<std::string> virus_tokens;
};

Decision personal_eval(const PersonalPolicy& p, const IpDatagram& d, Direction dir);

// ---------------------------------------------------------------------------
// Layering

struct TrailEntry {
  std::string layer;  // "filter", "proxy", "personal"
  Decision decision;
};

struct LayeredResult {
  Decision decision;
  std::vector<TrailEntry> trail;
};

/// Screening filter, then proxy content rules, then the personal firewall;
/// stops at the first refusal.
LayeredResult layered_eval(const Ruleset& filter, const ServiceRules& proxy, const PersonalPolicy& personal,
                           const IpDatagram& d, Direction dir);

/// Everything a site firewall needs, as read from a `[firewall NAME]` section.
struct FirewallConfig {
  std::string name;
  Ruleset rules;
  std::optional<ConnState> stateful;
  ServiceRules content;
  std::map<std::string, PersonalPolicy> personal;  // host -> policy

  /// Ruleset lines plus `stateful conns=N bytes=N`, `ban TOKEN`,
  /// `personal HOST allow|block PREFIX`, `personal HOST scan TOKEN`. Throws SyntaxError.
  static FirewallConfig parse(const std::string& name, const std::string& text);
};

/// Live firewall attached to a gateway and to the protected hosts. Every
/// decision is recorded as a `fw:<layer>` NOTE.
class SiteFirewall {
 public:
  SiteFirewall(FirewallConfig cfg, std::string gateway);
  /// Installs the hooks. The object must outlive the internetwork's use of them.
  void install(Internetwork& inet);
  const FirewallConfig& config() const { return cfg_; }
  ConnState* conn_state() { return cfg_.stateful ? &*cfg_.stateful : nullptr; }
  /// Direction as seen from the protected side.
  Direction direction_of(const IpDatagram& d) const;

 private:
  FirewallConfig cfg_;
  std::string gateway_;
};

namespace topo {
/// Outside host X behind ISP router I; FW guards LAN "IN" (H at 10.0.0.10);
/// modem router MD reaches bypass host B at 10.0.1.20 without passing FW.
simnet::TopologySpec site();
/// Dual-homed proxy P: 10.0.0.2 on LAN "IN" with C (.5) and W (.80),
/// 198.51.100.2 on LAN "OUT" with S (.80) and O (.5).
simnet::TopologySpec proxy();
}  // namespace topo

}  // namespace netsec::firewall
