#pragma once

// Miniature TCP/IP on top of simnet: IP forwarding with distance-vector
// routing, ICMP echo, UDP echo/chargen, TCP with a SYN_RECV queue, a caching
// DNS server, and per-node IPsec / tunnel / firewall hook points.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netsec/channel.hpp"
#include "netsec/ipsec.hpp"
#include "netsec/simnet.hpp"

namespace netsec::stack {

using simnet::Action;
using simnet::Layer;
using simnet::Network;
using simnet::NodeKind;
using simnet::TopologySpec;

// Well-known ports
inline constexpr std::uint16_t kEchoPort = 7;
inline constexpr std::uint16_t kChargenPort = 19;
inline constexpr std::uint16_t kDnsPort = 53;
inline constexpr std::uint16_t kControlPort = 6667;
inline constexpr std::uint16_t kFirstEphemeral = 49152;

struct NodePolicy {
  bool directed_broadcast = true;  // routers forward to a LAN broadcast address
  bool broadcast_echo = true;      // hosts answer broadcast echo requests
  bool icmp_echo = true;
  bool public_region = false;      // router refuses private destinations
  bool blackhole = false;          // drops everything it would forward
  bool compromised = false;        // zombie
  bool modem_bypass = false;       // reachable around the firewall
  bool advertise_zero = false;     // lies in distance-vector updates
};

// ---------------------------------------------------------------------------
// Routing

struct Route {
  std::string next_hop;  // empty: directly attached
  std::uint32_t cost = 0;
  friend bool operator==(const Route&, const Route&) = default;
};
using RouteTable = std::map<Prefix, Route>;
using Advertisement = std::vector<std::pair<Prefix, std::uint32_t>>;

/// Distance-vector relaxation: adopt (from, cost + 1) only when strictly
/// cheaper than the incumbent; ties keep the incumbent.
RouteTable route_update(const RouteTable& table, const std::string& from, const Advertisement& advertised);

/// Lowest cost among matching prefixes; ties broken by the longer prefix.
std::optional<std::pair<Prefix, Route>> route_lookup(const RouteTable& table, IpAddr dst);

// ---------------------------------------------------------------------------
// TCP

enum class TcpState { Closed, SynSent, SynRecv, Established, Closing };
std::string_view to_string(TcpState s);

struct Quad {
  IpAddr client_ip;
  std::uint16_t client_port = 0;
  IpAddr server_ip;
  std::uint16_t server_port = 0;
  friend auto operator<=>(const Quad&, const Quad&) = default;
  std::string to_string() const;
};

/// Local view: (local ip, local port, remote ip, remote port).
struct ConnKey {
  IpAddr local_ip;
  std::uint16_t local_port = 0;
  IpAddr remote_ip;
  std::uint16_t remote_port = 0;
  friend auto operator<=>(const ConnKey&, const ConnKey&) = default;
};

struct TcpConn {
  ConnKey key;
  bool is_client = true;
  TcpState state = TcpState::Closed;
  std::uint32_t iss = 0;
  std::uint32_t snd_nxt = 0;
  std::uint32_t rcv_nxt = 0;
  int resync_count = 0;
  std::string received;

  Quad quad() const;
};

struct SynRecvQueue {
  std::size_t capacity = 8;
  std::uint64_t timeout = 8;
  std::vector<std::pair<Quad, std::uint64_t>> entries;
  std::size_t peak = 0;
};

enum class Admit { Admitted, Discarded };
/// Purges entries with now - created > timeout, then admits iff length < capacity.
Admit syn_queue_admit(SynRecvQueue& q, const Quad& syn, std::uint64_t now);
void syn_queue_purge(SynRecvQueue& q, std::uint64_t now);

// ---------------------------------------------------------------------------
// UDP services and DNS

/// Reply length of the n-th chargen request: (n * 131) mod 513.
std::uint32_t chargen_length(std::uint64_t counter);
std::string chargen_payload(std::uint64_t counter);

struct DnsEntry {
  IpAddr addr;
  std::uint64_t expiry = 0;
};

struct DnsServer {
  std::map<std::string, DnsEntry> cache;
  std::map<std::string, IpAddr> authoritative;
  std::uint64_t ttl = 50;
  std::optional<IpAddr> upstream;  // answers from here are believed
};

/// Cached entries are valid iff now < expiry. Throws NameNotFound.
IpAddr dns_resolve(DnsServer& s, const std::string& name, std::uint64_t now);
void dns_install(DnsServer& s, const std::string& name, IpAddr addr, std::uint64_t now, std::uint64_t ttl);

struct AppMessage {
  std::uint64_t time = 0;
  IpAddr src;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Term data;
};

// ---------------------------------------------------------------------------
// Hooks

class Internetwork;

enum class HookPoint { Transit, Inbound, Outbound };
enum class HookResult { Pass, Drop, Consume };
using Hook = std::function<HookResult(Internetwork& inet, const std::string& node, IpDatagram& d)>;

struct HostState {
  NodePolicy policy;
  RouteTable routes;

  bool echo_enabled = false;
  bool chargen_enabled = false;
  std::uint64_t chargen_counter = 0;

  std::set<std::uint16_t> listeners;
  std::map<ConnKey, TcpConn> conns;
  SynRecvQueue synq;
  int storm_threshold = 5;
  std::uint64_t isn_counter = 0;
  std::vector<std::uint32_t> isn_overrides;  // consumed front to back
  std::uint16_t next_ephemeral = kFirstEphemeral;

  std::set<std::uint16_t> app_ports;
  std::map<std::uint16_t, std::vector<AppMessage>> inbox;

  std::optional<DnsServer> dns;

  std::optional<ipsec::IpsecEndpoint> ipsec;
  std::map<IpAddr, ipsec::Protocol> ipsec_out;  // protect traffic to these peers
  std::set<IpAddr> ipsec_required_from;         // refuse unprotected traffic from these
  std::vector<ipsec::Tunnel> tunnels;

  std::map<HookPoint, std::vector<Hook>> hooks;
};

class Internetwork {
 public:
  explicit Internetwork(TopologySpec spec, std::uint64_t seed = 0,
                        std::uint64_t max_events = Network::kDefaultMaxEvents);
  Internetwork(const Internetwork&) = delete;
  Internetwork& operator=(const Internetwork&) = delete;

  Network& net() { return *net_; }
  const Network& net() const { return *net_; }
  std::uint64_t now() const { return net_->now(); }
  std::uint64_t seed() const { return net_->seed(); }
  symcrypto::KeyFactory& keys() { return keys_; }

  HostState& host(const std::string& name);
  const HostState& host(const std::string& name) const;
  NodePolicy& policy(const std::string& name) { return host(name).policy; }
  bool is_router(const std::string& name) const;

  /// First declared address. Throws InvalidArgument for unnumbered nodes.
  IpAddr primary_ip(const std::string& name) const;
  std::optional<std::string> owner_of(IpAddr ip) const;
  /// Every prefix declared on any node.
  std::set<Prefix> all_prefixes() const;

  // routing
  std::vector<std::string> router_neighbors(const std::string& router) const;
  Advertisement advertisement(const std::string& router) const;
  /// Throws NotNeighbor, NotARouter.
  void apply_update(const std::string& router, const std::string& from, const Advertisement& adv);
  /// Synchronous distance-vector rounds until a fixed point. Returns the rounds taken.
  int converge(int max_rounds = 64);

  // services and configuration
  void enable_service(const std::string& node, std::uint16_t port, bool on = true);
  void bind_app(const std::string& node, std::uint16_t port);
  const std::vector<AppMessage>& inbox(const std::string& node, std::uint16_t port);
  void tcp_listen(const std::string& node, std::uint16_t port);
  void set_next_isn(const std::string& node, std::uint32_t isn);
  void add_hook(const std::string& node, HookPoint point, Hook h);
  DnsServer& dns_server(const std::string& node);
  ipsec::IpsecEndpoint& ipsec_endpoint(const std::string& node, const std::string& ca = "IKE-CA");

  // traffic (all of these only schedule or transmit; call run() to progress)
  void send_ip(const std::string& from, IpDatagram d);
  void send_udp(const std::string& from, IpAddr dst, std::uint16_t sport, std::uint16_t dport, Term data,
                std::optional<IpAddr> claimed_src = std::nullopt);
  void send_icmp_echo(const std::string& from, IpAddr dst, std::uint16_t id, std::uint16_t seq,
                      std::optional<IpAddr> claimed_src = std::nullopt);
  /// Client side of the handshake. Returns the client's connection key.
  ConnKey tcp_open(const std::string& client, IpAddr server, std::uint16_t dport, std::uint16_t sport = 0);
  /// Throws NotEstablished.
  void tcp_send(const std::string& node, const ConnKey& key, const std::string& data);
  void tcp_close(const std::string& node, const ConnKey& key);
  TcpConn* conn(const std::string& node, const ConnKey& key);
  /// Sends a segment exactly as given (used to forge traffic).
  void send_raw_tcp(const std::string& from, IpAddr src, IpAddr dst, const TcpSegment& seg);
  /// Issues a DNS query from an ephemeral port; the answer lands in that port's inbox.
  std::uint16_t dns_query(const std::string& client, IpAddr server, const std::string& name);

  std::string run() { return net_->run_until_idle(); }

  void emit(const std::string& node, Action a, Layer l, std::string detail) {
    net_->emit(node, a, l, std::move(detail));
  }

 private:
  void on_frame(const std::string& node, const Frame& frame, std::size_t segment);
  bool is_local(const std::string& node, IpAddr dst, bool* broadcast) const;
  bool run_hooks(const std::string& node, HookPoint p, IpDatagram& d);
  void route_out(const std::string& node, IpDatagram d, bool transit);
  void deliver_connected(const std::string& node, const Prefix& prefix, IpDatagram d);
  void send_frame_to(const std::string& node, const std::string& next, const IpDatagram& d);
  void drop(const std::string& node, Layer l, const std::string& reason, const IpDatagram& d);
  void local_deliver(const std::string& node, IpDatagram d, bool broadcast);
  void handle_icmp(const std::string& node, const IpDatagram& d, bool broadcast);
  void handle_udp(const std::string& node, const IpDatagram& d);
  void handle_tcp(const std::string& node, const IpDatagram& d);
  void send_tcp(const std::string& node, const TcpConn& c, std::uint8_t flags, const std::string& data,
                const std::string& tag);
  std::uint32_t next_isn(const std::string& node);
  std::uint16_t ephemeral(const std::string& node);

  std::unique_ptr<Network> net_;
  std::map<std::string, HostState> hosts_;
  symcrypto::KeyFactory keys_;
};

/// Channel that carries each message as a UDP datagram across the internetwork.
class NetChannel : public Channel {
 public:
  static constexpr std::uint16_t kPort = 5000;
  explicit NetChannel(Internetwork& inet) : inet_(inet) {}
  std::optional<Term> deliver(const std::string& from, const std::string& to, const std::string& label,
                              const Term& msg) override;
  void note(const std::string& node, const std::string& text) override;
  std::uint64_t now() const override { return inet_.now(); }

 private:
  Internetwork& inet_;
};

/// Negotiates an SA so that traffic from `sender` to `receiver` is protected
/// with `p`, and makes `receiver` refuse unprotected traffic from `sender`.
ipsec::SaPair secure_flow(Internetwork& inet, const std::string& sender, const std::string& receiver,
                          ipsec::Protocol p, Channel& ch);

}  // namespace netsec::stack
