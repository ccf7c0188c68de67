#pragma once

// Attack drivers. Each one orchestrates an Internetwork, runs it, and reads
// its counters back out of the trace.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "netsec/stack.hpp"

namespace netsec::attacks {

using stack::Internetwork;

struct AttackReport {
  std::string name;
  bool success = false;
  std::map<std::string, std::int64_t> metrics;
  std::vector<std::string> notes;

  std::int64_t metric(const std::string& key) const;
  /// "name success=1 k=v k=v"
  std::string summary() const;
};

/// Generates traffic once the attack is in position.
using Traffic = std::function<void(Internetwork&)>;

/// Taps link a-b for `observer`, then runs `traffic`. Throws LinkNotTappable.
AttackReport wiretap_capture(Internetwork& inet, const std::string& a, const std::string& b,
                             const std::string& observer, const Traffic& traffic);

/// Clones the victim's hardware address onto the intruder's NIC. Throws NotSameDomain.
AttackReport reprogram_nic(Internetwork& inet, const std::string& intruder, const std::string& victim, bool reinject,
                           const Traffic& traffic);

struct HijackTarget {
  std::string client;
  stack::ConnKey conn;  // client's view
};

/// Predicts the server's next expected sequence number from the attacker's
/// taps and injects `payload` spoofed as the client. Throws NoTap.
AttackReport hijack_session(Internetwork& inet, const std::string& attacker, const HijackTarget& target,
                            const std::string& payload, int storm_threshold = 5);

/// Public-key substitution by a router on the only a-b path. Throws NotOnPath.
AttackReport mitm_pubkey(Internetwork& inet, const std::string& attacker, const std::string& a, const std::string& b,
                         const std::string& message, const std::optional<std::string>& rewrite, bool verify_certs);

/// One spoofed datagram (B:7 -> A:19) and then the run budget.
AttackReport echo_chargen(Internetwork& inet, const std::string& attacker, const std::string& host_a,
                          const std::string& host_b, std::optional<std::uint64_t> budget = std::nullopt);

/// Spoofed echo request to the directed broadcast address of `domain`. Throws UnknownDomain.
AttackReport smurf(Internetwork& inet, const std::string& attacker, IpAddr victim, const std::string& domain);

struct Probe {
  std::string from;
  std::string to;  // receives on kProbePort
};
inline constexpr std::uint16_t kProbePort = 9000;

/// Baseline probes, then the lie and the blackhole, then the same probes. Throws NotARouter.
AttackReport redirect_blackhole(Internetwork& inet, const std::string& router, const std::vector<Probe>& probes);

AttackReport dns_poison(Internetwork& inet, const std::string& attacker, const std::string& server,
                        const std::string& name, IpAddr bogus, std::uint64_t ttl,
                        const std::vector<std::string>& clients);

/// Floods the server's SYN_RECV queue from addresses without a live host,
/// then probes from `genuine` during saturation and after the timeout.
AttackReport syn_flood(Internetwork& inet, const std::string& attacker, const std::string& server, std::uint16_t port,
                       int count, const std::vector<IpAddr>& spoof_pool, const std::string& genuine);

/// Signals each zombie on the control port; each then floods. Throws ZombieNotCompromised.
AttackReport ddos_campaign(Internetwork& inet, const std::string& attacker, const std::vector<std::string>& zombies,
                           const std::string& victim, std::uint16_t port, int per_zombie, const std::string& genuine);

struct TamperTap {
  std::size_t seen = 0;
  std::size_t tampered = 0;
};

/// Applies symcrypto::tamper to the body of the nth (0-based) channel message
/// that `node` handles, whether it sends, forwards or receives it. The
/// returned counters stay live for as long as the hook is installed.
std::shared_ptr<TamperTap> tamper_in_flight(Internetwork& inet, const std::string& node, std::size_t nth);

/// `count` addresses in 198.18.0.0/15 that no node owns.
std::vector<IpAddr> unused_addresses(const Internetwork& inet, std::size_t count, std::uint32_t salt = 0);

/// Attack names as written in scenario files.
const std::vector<std::string>& attack_names();

namespace topo {

/// Router R with amplifier LAN "AMP" (hosts H1..Hn), victim V and attacker M on their own links.
simnet::TopologySpec smurf(int hosts);
/// C, S and M on LAN "L".
simnet::TopologySpec lan_trio(const std::string& a = "C", const std::string& b = "S", const std::string& m = "M");
/// A - M - B through router M.
simnet::TopologySpec mitm_line();
/// X next to R1..R3 on LAN P0 (with S); core C next to R1..R3 and E1..E4, each with LAN Lk and host Hk.
simnet::TopologySpec redirect();
/// DNS server D, upstream U, clients C1..Cn and attacker M on one LAN.
simnet::TopologySpec dns(int clients);
/// Victim S, genuine client G, attacker M and zombies Z1..Zn on one LAN.
simnet::TopologySpec flood(int zombies);

}  // namespace topo

}  // namespace netsec::attacks
