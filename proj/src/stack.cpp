#include "netsec/stack.hpp"

#include <algorithm>
#include <sstream>

#include "netsec/error.hpp"
#include "netsec/hash.hpp"

namespace netsec::stack {

namespace {

bool seq_after(std::uint32_t a, std::uint32_t b) { return static_cast<std::int32_t>(a - b) > 0; }

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string_view to_string(TcpState s) {
  switch (s) {
    case TcpState::Closed: return "CLOSED";
    case TcpState::SynSent: return "SYN_SENT";
    case TcpState::SynRecv: return "SYN_RECV";
    case TcpState::Established: return "ESTABLISHED";
    case TcpState::Closing: return "CLOSING";
  }
  return "?";
}

std::string Quad::to_string() const {
  return client_ip.to_string() + ":" + std::to_string(client_port) + ">" + server_ip.to_string() + ":" +
         std::to_string(server_port);
}

Quad TcpConn::quad() const {
  if (is_client) return {key.local_ip, key.local_port, key.remote_ip, key.remote_port};
  return {key.remote_ip, key.remote_port, key.local_ip, key.local_port};
}

// ---------------------------------------------------------------------------
// Pure pieces

RouteTable route_update(const RouteTable& table, const std::string& from, const Advertisement& advertised) {
  RouteTable out = table;
  for (const auto& [prefix, cost] : advertised) {
    const std::uint32_t offered = cost + 1;
    auto it = out.find(prefix);
    if (it == out.end() || offered < it->second.cost) out[prefix] = Route{from, offered};
  }
  return out;
}

std::optional<std::pair<Prefix, Route>> route_lookup(const RouteTable& table, IpAddr dst) {
  std::optional<std::pair<Prefix, Route>> best;
  for (const auto& [prefix, route] : table) {
    if (!prefix.contains(dst)) continue;
    if (!best || route.cost < best->second.cost ||
        (route.cost == best->second.cost && prefix.len > best->first.len)) {
      best = {prefix, route};
    }
  }
  return best;
}

void syn_queue_purge(SynRecvQueue& q, std::uint64_t now) {
  std::erase_if(q.entries, [&](const auto& e) { return now - e.second > q.timeout; });
}

Admit syn_queue_admit(SynRecvQueue& q, const Quad& syn, std::uint64_t now) {
  syn_queue_purge(q, now);
  if (q.entries.size() >= q.capacity) return Admit::Discarded;
  q.entries.emplace_back(syn, now);
  q.peak = std::max(q.peak, q.entries.size());
  return Admit::Admitted;
}

std::uint32_t chargen_length(std::uint64_t counter) { return static_cast<std::uint32_t>((counter * 131) % 513); }

std::string chargen_payload(std::uint64_t counter) {
  const auto len = chargen_length(counter);
  std::string s;
  s.reserve(len);
  for (std::uint32_t i = 0; i < len; ++i) s += static_cast<char>(33 + (counter + i) % 94);
  return s;
}

IpAddr dns_resolve(DnsServer& s, const std::string& name, std::uint64_t now) {
  auto it = s.cache.find(name);
  if (it != s.cache.end()) {
    if (now < it->second.expiry) return it->second.addr;
    s.cache.erase(it);
  }
  auto auth = s.authoritative.find(name);
  if (auth == s.authoritative.end()) throw Error(Errc::NameNotFound, name);
  dns_install(s, name, auth->second, now, s.ttl);
  return auth->second;
}

void dns_install(DnsServer& s, const std::string& name, IpAddr addr, std::uint64_t now, std::uint64_t ttl) {
  s.cache[name] = DnsEntry{addr, now + ttl};
}

// ---------------------------------------------------------------------------
// Internetwork setup

Internetwork::Internetwork(TopologySpec spec, std::uint64_t seed, std::uint64_t max_events)
    : net_(std::make_unique<Network>(std::move(spec), seed, max_events)), keys_(seed) {
  for (const auto& n : net_->spec().nodes) {
    auto& hs = hosts_[n.name];
    hs.chargen_counter = derive(seed, "chargen:" + n.name, 0) % 513;
    if (n.kind != NodeKind::Host) {
      for (const auto& a : n.addrs) hs.routes[a.prefix()] = Route{"", 0};
    }
  }
  net_->set_receiver([this](const std::string& node, const Frame& f, std::size_t seg) { on_frame(node, f, seg); });
}

HostState& Internetwork::host(const std::string& name) {
  auto it = hosts_.find(name);
  if (it == hosts_.end()) throw Error(Errc::UnknownNode, name);
  return it->second;
}

const HostState& Internetwork::host(const std::string& name) const {
  auto it = hosts_.find(name);
  if (it == hosts_.end()) throw Error(Errc::UnknownNode, name);
  return it->second;
}

bool Internetwork::is_router(const std::string& name) const { return net_->node(name).kind != NodeKind::Host; }

IpAddr Internetwork::primary_ip(const std::string& name) const {
  const auto& n = net_->node(name);
  if (n.addrs.empty()) throw Error(Errc::InvalidArgument, name + " has no address");
  return n.addrs.front().ip;
}

std::optional<std::string> Internetwork::owner_of(IpAddr ip) const {
  for (const auto& n : net_->spec().nodes) {
    for (const auto& a : n.addrs) {
      if (a.ip == ip) return n.name;
    }
  }
  return std::nullopt;
}

std::set<Prefix> Internetwork::all_prefixes() const {
  std::set<Prefix> out;
  for (const auto& n : net_->spec().nodes) {
    for (const auto& a : n.addrs) out.insert(a.prefix());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Routing

std::vector<std::string> Internetwork::router_neighbors(const std::string& router) const {
  std::vector<std::string> out;
  for (auto s : net_->segments_of(router)) {
    for (const auto& m : net_->segment(s).members) {
      if (m != router && is_router(m) && std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
  }
  return out;
}

Advertisement Internetwork::advertisement(const std::string& router) const {
  Advertisement adv;
  const auto& hs = host(router);
  if (hs.policy.advertise_zero) {
    for (const auto& p : all_prefixes()) adv.emplace_back(p, 0);
    return adv;
  }
  for (const auto& [p, r] : hs.routes) adv.emplace_back(p, r.cost);
  return adv;
}

void Internetwork::apply_update(const std::string& router, const std::string& from, const Advertisement& adv) {
  if (!is_router(router)) throw Error(Errc::NotARouter, router);
  if (!net_->shared_segment(router, from)) throw Error(Errc::NotNeighbor, from + " is not adjacent to " + router);
  auto& hs = host(router);
  hs.routes = route_update(hs.routes, from, adv);
}

int Internetwork::converge(int max_rounds) {
  std::vector<std::string> routers;
  for (const auto& n : net_->spec().nodes) {
    if (n.kind != NodeKind::Host) routers.push_back(n.name);
  }
  for (int round = 1; round <= max_rounds; ++round) {
    std::map<std::string, Advertisement> adverts;
    for (const auto& r : routers) adverts[r] = advertisement(r);
    bool changed = false;
    for (const auto& r : routers) {
      auto& hs = host(r);
      for (const auto& n : router_neighbors(r)) {
        auto next = route_update(hs.routes, n, adverts[n]);
        if (next != hs.routes) {
          hs.routes = std::move(next);
          changed = true;
        }
      }
    }
    if (!changed) {
      emit("sim", Action::Note, Layer::Internet, "converged rounds=" + std::to_string(round));
      return round;
    }
  }
  emit("sim", Action::Note, Layer::Internet, "converge gave up after " + std::to_string(max_rounds));
  return max_rounds;
}

// ---------------------------------------------------------------------------
// Configuration

void Internetwork::enable_service(const std::string& node, std::uint16_t port, bool on) {
  auto& hs = host(node);
  if (port == kEchoPort) hs.echo_enabled = on;
  else if (port == kChargenPort) hs.chargen_enabled = on;
  else throw Error(Errc::InvalidArgument, "no built-in service on port " + std::to_string(port));
}

void Internetwork::bind_app(const std::string& node, std::uint16_t port) { host(node).app_ports.insert(port); }

const std::vector<AppMessage>& Internetwork::inbox(const std::string& node, std::uint16_t port) {
  return host(node).inbox[port];
}

void Internetwork::tcp_listen(const std::string& node, std::uint16_t port) { host(node).listeners.insert(port); }

void Internetwork::set_next_isn(const std::string& node, std::uint32_t isn) {
  host(node).isn_overrides.push_back(isn);
}

void Internetwork::add_hook(const std::string& node, HookPoint point, Hook h) {
  host(node).hooks[point].push_back(std::move(h));
}

DnsServer& Internetwork::dns_server(const std::string& node) {
  auto& hs = host(node);
  if (!hs.dns) hs.dns.emplace();
  return *hs.dns;
}

ipsec::IpsecEndpoint& Internetwork::ipsec_endpoint(const std::string& node, const std::string& ca) {
  auto& hs = host(node);
  if (!hs.ipsec) hs.ipsec = ipsec::make_endpoint(node, primary_ip(node), keys_, ca, {ca});
  return *hs.ipsec;
}

std::uint32_t Internetwork::next_isn(const std::string& node) {
  auto& hs = host(node);
  if (!hs.isn_overrides.empty()) {
    auto v = hs.isn_overrides.front();
    hs.isn_overrides.erase(hs.isn_overrides.begin());
    return v;
  }
  return static_cast<std::uint32_t>(derive(seed(), "isn:" + node, hs.isn_counter++));
}

std::uint16_t Internetwork::ephemeral(const std::string& node) {
  auto& hs = host(node);
  auto p = hs.next_ephemeral++;
  if (hs.next_ephemeral == 0) hs.next_ephemeral = kFirstEphemeral;
  return p;
}

// ---------------------------------------------------------------------------
// Output path

void Internetwork::drop(const std::string& node, Layer l, const std::string& reason, const IpDatagram& d) {
  net_->emit(node, Action::Drop, l, reason + " " + summarize(d));
}

bool Internetwork::run_hooks(const std::string& node, HookPoint p, IpDatagram& d) {
  auto& hs = host(node);
  auto it = hs.hooks.find(p);
  if (it == hs.hooks.end()) return true;
  auto hooks = it->second;
  for (auto& h : hooks) {
    switch (h(*this, node, d)) {
      case HookResult::Pass: break;
      case HookResult::Drop:
      case HookResult::Consume: return false;
    }
  }
  return true;
}

void Internetwork::send_ip(const std::string& from, IpDatagram d) {
  if (!run_hooks(from, HookPoint::Outbound, d)) return;
  auto& hs = host(from);
  auto pol = hs.ipsec_out.find(d.dst);
  if (pol != hs.ipsec_out.end() && hs.ipsec &&
      (d.protocol == proto::TCP || d.protocol == proto::UDP || d.protocol == proto::ICMP)) {
    auto* sa = hs.ipsec->sadb.outbound_for(d.dst);
    if (!sa) {
      drop(from, Layer::Internet, "no-sa", d);
      return;
    }
    try {
      d = pol->second == ipsec::Protocol::AH ? ipsec::ah_protect(*sa, d, now()) : ipsec::esp_protect(*sa, d, now());
    } catch (const Error& e) {
      drop(from, Layer::Internet, std::string(to_string(e.code())), d);
      return;
    }
  }
  route_out(from, std::move(d), false);
}

void Internetwork::route_out(const std::string& node, IpDatagram d, bool transit) {
  auto& hs = host(node);
  if (is_router(node)) {
    if (transit && hs.policy.blackhole) {
      drop(node, Layer::Internet, "blackhole", d);
      return;
    }
    if (hs.policy.public_region && d.dst.is_private()) {
      drop(node, Layer::Internet, "private-dst", d);
      return;
    }
    for (const auto& t : hs.tunnels) {
      if (!t.remote_private.contains(d.dst)) continue;
      IpDatagram outer;
      try {
        outer = ipsec::vpn_encapsulate(t, d);
      } catch (const Error& e) {
        drop(node, Layer::Internet, std::string(to_string(e.code())), d);
        return;
      }
      net_->emit(node, Action::Note, Layer::Internet, "vpn-encap " + t.name + " " + summarize(d));
      route_out(node, std::move(outer), false);
      return;
    }
    auto r = route_lookup(hs.routes, d.dst);
    if (!r) {
      drop(node, Layer::Internet, "no-route", d);
      return;
    }
    if (r->second.next_hop.empty()) deliver_connected(node, r->first, std::move(d));
    else send_frame_to(node, r->second.next_hop, d);
    return;
  }
  for (const auto& a : net_->node(node).addrs) {
    if (a.prefix().contains(d.dst)) {
      deliver_connected(node, a.prefix(), std::move(d));
      return;
    }
  }
  const auto& gw = net_->node(node).gateway;
  if (!gw) {
    drop(node, Layer::Internet, "no-route", d);
    return;
  }
  send_frame_to(node, *gw, d);
}

void Internetwork::deliver_connected(const std::string& node, const Prefix& prefix, IpDatagram d) {
  std::optional<std::size_t> seg;
  std::optional<std::string> target;
  for (auto s : net_->segments_of(node)) {
    for (const auto& m : net_->segment(s).members) {
      if (m == node) continue;
      for (const auto& a : net_->node(m).addrs) {
        if (!prefix.contains(a.ip)) continue;
        if (!seg) seg = s;
        if (a.ip == d.dst && !target) {
          target = m;
          seg = s;
        }
      }
    }
  }
  const bool directed = prefix.len < 32 && d.dst == prefix.broadcast();
  if (directed) {
    if (is_router(node) && !host(node).policy.directed_broadcast) {
      drop(node, Layer::Internet, "directed-broadcast", d);
      return;
    }
    if (!seg) {
      drop(node, Layer::Internet, "host-unreachable", d);
      return;
    }
    net_->transmit(node, *seg, Frame{net_->nic(node).unicast, kBroadcastHw, d});
    return;
  }
  if (!target) {
    drop(node, Layer::Internet, "host-unreachable", d);
    return;
  }
  net_->transmit(node, *seg, Frame{net_->nic(node).unicast, net_->assigned_hw(*target), d});
}

void Internetwork::send_frame_to(const std::string& node, const std::string& next, const IpDatagram& d) {
  auto seg = net_->shared_segment(node, next);
  if (!seg) {
    drop(node, Layer::Internet, "no-link-to-" + next, d);
    return;
  }
  net_->transmit(node, *seg, Frame{net_->nic(node).unicast, net_->assigned_hw(next), d});
}

void Internetwork::send_udp(const std::string& from, IpAddr dst, std::uint16_t sport, std::uint16_t dport, Term data,
                            std::optional<IpAddr> claimed_src) {
  IpDatagram d;
  d.src = claimed_src ? *claimed_src : primary_ip(from);
  d.dst = dst;
  d.protocol = proto::UDP;
  d.payload = UdpDatagram{sport, dport, std::move(data)};
  net_->emit(from, Action::Send, Layer::Transport, summarize(d));
  send_ip(from, std::move(d));
}

void Internetwork::send_icmp_echo(const std::string& from, IpAddr dst, std::uint16_t id, std::uint16_t seq,
                                  std::optional<IpAddr> claimed_src) {
  IpDatagram d;
  d.src = claimed_src ? *claimed_src : primary_ip(from);
  d.dst = dst;
  d.protocol = proto::ICMP;
  d.payload = IcmpMessage{IcmpMessage::kEchoRequest, 0, id, seq};
  net_->emit(from, Action::Send, Layer::Internet, summarize(d));
  send_ip(from, std::move(d));
}

void Internetwork::send_tcp(const std::string& node, const TcpConn& c, std::uint8_t flags, const std::string& data,
                            const std::string& tag) {
  TcpSegment s;
  s.src_port = c.key.local_port;
  s.dst_port = c.key.remote_port;
  s.seq = (flags & tcpflag::SYN) ? c.iss : c.snd_nxt;
  s.ack = (flags & tcpflag::ACK) ? c.rcv_nxt : 0;
  s.flags = flags;
  s.data = data;
  IpDatagram d;
  d.src = c.key.local_ip;
  d.dst = c.key.remote_ip;
  d.protocol = proto::TCP;
  d.payload = s;
  net_->emit(node, Action::Send, Layer::Transport, summarize(d) + (tag.empty() ? "" : " [" + tag + "]"));
  send_ip(node, std::move(d));
}

void Internetwork::send_raw_tcp(const std::string& from, IpAddr src, IpAddr dst, const TcpSegment& seg) {
  IpDatagram d;
  d.src = src;
  d.dst = dst;
  d.protocol = proto::TCP;
  d.payload = seg;
  net_->emit(from, Action::Send, Layer::Transport, summarize(d) + " [forged]");
  send_ip(from, std::move(d));
}

ConnKey Internetwork::tcp_open(const std::string& client, IpAddr server, std::uint16_t dport, std::uint16_t sport) {
  ConnKey key{primary_ip(client), sport ? sport : ephemeral(client), server, dport};
  TcpConn c;
  c.key = key;
  c.is_client = true;
  c.state = TcpState::SynSent;
  c.iss = next_isn(client);
  c.snd_nxt = c.iss + 1;
  auto& stored = host(client).conns[key] = c;
  send_tcp(client, stored, tcpflag::SYN, "", "");
  return key;
}

TcpConn* Internetwork::conn(const std::string& node, const ConnKey& key) {
  auto& conns = host(node).conns;
  auto it = conns.find(key);
  return it == conns.end() ? nullptr : &it->second;
}

void Internetwork::tcp_send(const std::string& node, const ConnKey& key, const std::string& data) {
  auto* c = conn(node, key);
  if (!c || c->state != TcpState::Established) throw Error(Errc::NotEstablished, node);
  send_tcp(node, *c, tcpflag::ACK, data, "");
  c->snd_nxt += static_cast<std::uint32_t>(data.size());
}

void Internetwork::tcp_close(const std::string& node, const ConnKey& key) {
  auto* c = conn(node, key);
  if (!c || c->state != TcpState::Established) throw Error(Errc::NotEstablished, node);
  send_tcp(node, *c, tcpflag::FIN | tcpflag::ACK, "", "");
  c->snd_nxt += 1;
  c->state = TcpState::Closing;
}

std::uint16_t Internetwork::dns_query(const std::string& client, IpAddr server, const std::string& name) {
  auto port = ephemeral(client);
  bind_app(client, port);
  send_udp(client, server, port, kDnsPort, Term::plain("QUERY " + name));
  return port;
}

// ---------------------------------------------------------------------------
// Input path

bool Internetwork::is_local(const std::string& node, IpAddr dst, bool* broadcast) const {
  *broadcast = false;
  if (dst == IpAddr(0xffffffffu)) {
    *broadcast = true;
    return true;
  }
  for (const auto& a : net_->node(node).addrs) {
    if (a.ip == dst) return true;
    if (a.len < 32 && a.prefix().broadcast() == dst) {
      *broadcast = true;
      return true;
    }
  }
  return false;
}

void Internetwork::on_frame(const std::string& node, const Frame& frame, std::size_t) {
  IpDatagram d = frame.dgram;
  bool bc = false;
  bool local = is_local(node, d.dst, &bc);
  // a router forwards directed broadcasts that did not arrive as link broadcasts
  if (local && bc && is_router(node) && frame.dst_hw != kBroadcastHw) local = false;

  if (local) {
    auto& hs = host(node);
    if (d.protocol == proto::IPIP) {
      for (const auto& t : hs.tunnels) {
        if (t.local_public != d.dst) continue;
        IpDatagram inner;
        try {
          inner = ipsec::vpn_decapsulate(d, t.key, t.local_public);
        } catch (const Error& e) {
          drop(node, Layer::Internet, std::string(to_string(e.code())), d);
          return;
        }
        net_->emit(node, Action::Recv, Layer::Internet, "vpn-decap " + t.name + " " + summarize(inner));
        route_out(node, std::move(inner), true);
        return;
      }
    }
    local_deliver(node, std::move(d), bc || frame.dst_hw == kBroadcastHw);
    return;
  }
  if (!is_router(node)) {
    drop(node, Layer::Internet, "not-for-me", d);
    return;
  }
  if (d.ttl <= 1) {
    drop(node, Layer::Internet, "ttl", d);
    return;
  }
  --d.ttl;
  if (!run_hooks(node, HookPoint::Transit, d)) return;
  route_out(node, std::move(d), true);
}

void Internetwork::local_deliver(const std::string& node, IpDatagram d, bool broadcast) {
  auto& hs = host(node);
  if (d.protocol == proto::AH || d.protocol == proto::ESP) {
    if (!hs.ipsec) {
      drop(node, Layer::Internet, "UnknownSpi", d);
      return;
    }
    try {
      d = d.protocol == proto::AH ? ipsec::ah_verify(hs.ipsec->sadb, d, now())
                                  : ipsec::esp_open(hs.ipsec->sadb, d, now());
    } catch (const Error& e) {
      drop(node, Layer::Internet, std::string(to_string(e.code())), d);
      return;
    }
    net_->emit(node, Action::Recv, Layer::Internet, "ipsec-accept " + summarize(d));
  } else if (hs.ipsec_required_from.count(d.src) &&
             (d.protocol == proto::TCP || d.protocol == proto::UDP || d.protocol == proto::ICMP)) {
    drop(node, Layer::Internet, "ipsec-required", d);
    return;
  }
  if (!run_hooks(node, HookPoint::Inbound, d)) return;
  switch (d.protocol) {
    case proto::ICMP: handle_icmp(node, d, broadcast); break;
    case proto::UDP: handle_udp(node, d); break;
    case proto::TCP: handle_tcp(node, d); break;
    default: drop(node, Layer::Internet, "protocol-unreachable", d);
  }
}

void Internetwork::handle_icmp(const std::string& node, const IpDatagram& d, bool broadcast) {
  const auto* m = std::get_if<IcmpMessage>(&d.payload);
  if (!m) {
    drop(node, Layer::Internet, "malformed", d);
    return;
  }
  net_->emit(node, Action::Recv, Layer::Internet, summarize(d));
  if (m->type != IcmpMessage::kEchoRequest) return;
  auto& hs = host(node);
  if (broadcast && (is_router(node) || !hs.policy.broadcast_echo)) {
    drop(node, Layer::Internet, "broadcast-echo", d);
    return;
  }
  if (!hs.policy.icmp_echo) {
    drop(node, Layer::Internet, "icmp-disabled", d);
    return;
  }
  IpDatagram reply;
  reply.src = broadcast ? primary_ip(node) : d.dst;
  reply.dst = d.src;  // whoever the request claims to be from
  reply.protocol = proto::ICMP;
  reply.payload = IcmpMessage{IcmpMessage::kEchoReply, 0, m->id, m->seq};
  net_->emit(node, Action::Send, Layer::Internet, summarize(reply));
  send_ip(node, std::move(reply));
}

void Internetwork::handle_udp(const std::string& node, const IpDatagram& d) {
  const auto* u = std::get_if<UdpDatagram>(&d.payload);
  if (!u) {
    drop(node, Layer::Transport, "malformed", d);
    return;
  }
  auto& hs = host(node);
  net_->emit(node, Action::Recv, Layer::Transport, summarize(d));
  const IpAddr me = d.dst;
  switch (u->dst_port) {
    case kEchoPort:
      if (!hs.echo_enabled) {
        drop(node, Layer::Transport, "service-disabled", d);
        return;
      }
      send_udp(node, d.src, kEchoPort, u->src_port, u->data, me);
      return;
    case kChargenPort:
      if (!hs.chargen_enabled) {
        drop(node, Layer::Transport, "service-disabled", d);
        return;
      }
      send_udp(node, d.src, kChargenPort, u->src_port, Term::plain(chargen_payload(hs.chargen_counter++)), me);
      return;
    default: break;
  }
  if (u->dst_port == kDnsPort && hs.dns) {
    if (!u->data.is(Term::Kind::Plain)) {
      drop(node, Layer::Application, "dns-malformed", d);
      return;
    }
    auto w = words(u->data.bytes());
    if (w.size() == 2 && w[0] == "QUERY") {
      std::string answer;
      try {
        answer = "ANSWER " + w[1] + " " + dns_resolve(*hs.dns, w[1], now()).to_string();
      } catch (const Error&) {
        answer = "NXDOMAIN " + w[1];
      }
      net_->emit(node, Action::Note, Layer::Application, "dns " + answer);
      send_udp(node, d.src, kDnsPort, u->src_port, Term::plain(answer), me);
      return;
    }
    if (w.size() == 4 && w[0] == "ANSWER") {
      if (!hs.dns->upstream || *hs.dns->upstream != d.src) {
        drop(node, Layer::Application, "dns-untrusted", d);
        return;
      }
      try {
        dns_install(*hs.dns, w[1], IpAddr::parse(w[2]), now(), std::stoull(w[3]));
      } catch (const std::exception&) {
        drop(node, Layer::Application, "dns-malformed", d);
        return;
      }
      net_->emit(node, Action::Note, Layer::Application, "dns-install " + w[1] + " " + w[2] + " ttl=" + w[3]);
      return;
    }
    drop(node, Layer::Application, "dns-malformed", d);
    return;
  }
  if (hs.app_ports.count(u->dst_port)) {
    hs.inbox[u->dst_port].push_back({now(), d.src, u->src_port, u->dst_port, u->data});
    net_->emit(node, Action::Recv, Layer::Application,
               "port=" + std::to_string(u->dst_port) + " from=" + d.src.to_string() + " " + u->data.render());
    return;
  }
  drop(node, Layer::Transport, "port-unreachable", d);
}

void Internetwork::handle_tcp(const std::string& node, const IpDatagram& d) {
  const auto* s = std::get_if<TcpSegment>(&d.payload);
  if (!s) {
    drop(node, Layer::Transport, "malformed", d);
    return;
  }
  auto& hs = host(node);
  net_->emit(node, Action::Recv, Layer::Transport, summarize(d));
  const ConnKey key{d.dst, s->dst_port, d.src, s->src_port};
  auto it = hs.conns.find(key);

  if (s->has(tcpflag::SYN) && !s->has(tcpflag::ACK)) {
    if (it != hs.conns.end()) return;  // duplicate SYN
    if (!hs.listeners.count(s->dst_port)) {
      TcpConn tmp;
      tmp.key = key;
      tmp.rcv_nxt = s->seq + 1;
      tmp.snd_nxt = 0;
      net_->emit(node, Action::Drop, Layer::Transport, "no-listener port=" + std::to_string(s->dst_port));
      send_tcp(node, tmp, tcpflag::RST | tcpflag::ACK, "", "");
      return;
    }
    const Quad q{d.src, s->src_port, d.dst, s->dst_port};
    const auto verdict = syn_queue_admit(hs.synq, q, now());
    if (verdict == Admit::Discarded) {
      drop(node, Layer::Transport, "syn-queue-full len=" + std::to_string(hs.synq.entries.size()), d);
      return;
    }
    net_->emit(node, Action::Note, Layer::Transport,
               "syn-queue admit " + q.to_string() + " len=" + std::to_string(hs.synq.entries.size()));
    TcpConn c;
    c.key = key;
    c.is_client = false;
    c.state = TcpState::SynRecv;
    c.iss = next_isn(node);
    c.snd_nxt = c.iss + 1;
    c.rcv_nxt = s->seq + 1;
    auto& stored = hs.conns[key] = c;
    send_tcp(node, stored, tcpflag::SYN | tcpflag::ACK, "", "");
    return;
  }

  if (it == hs.conns.end()) {
    if (!s->has(tcpflag::RST)) drop(node, Layer::Transport, "no-connection", d);
    return;
  }
  TcpConn& c = it->second;

  if (s->has(tcpflag::RST)) {
    c.state = TcpState::Closed;
    net_->emit(node, Action::Note, Layer::Transport, "reset " + c.quad().to_string());
    return;
  }

  switch (c.state) {
    case TcpState::SynSent:
      if (s->has(tcpflag::SYN) && s->has(tcpflag::ACK) && s->ack == c.snd_nxt) {
        c.rcv_nxt = s->seq + 1;
        c.state = TcpState::Established;
        send_tcp(node, c, tcpflag::ACK, "", "");
        net_->emit(node, Action::Note, Layer::Transport, "established " + c.quad().to_string());
      }
      return;
    case TcpState::SynRecv:
      if (s->has(tcpflag::ACK) && s->ack == c.snd_nxt && s->seq == c.rcv_nxt) {
        const Quad q = c.quad();
        std::erase_if(hs.synq.entries, [&](const auto& e) { return e.first == q; });
        c.state = TcpState::Established;
        net_->emit(node, Action::Note, Layer::Transport, "established " + q.to_string());
      }
      if (c.state != TcpState::Established || s->data.empty()) return;
      break;
    case TcpState::Closed: drop(node, Layer::Transport, "closed", d); return;
    case TcpState::Established:
    case TcpState::Closing: break;
  }

  if (!s->data.empty()) {
    if (s->seq == c.rcv_nxt) {
      c.rcv_nxt += static_cast<std::uint32_t>(s->data.size());
      c.received += s->data;
      net_->emit(node, Action::Recv, Layer::Application,
                 "tcp-data port=" + std::to_string(c.key.local_port) + " from=" + d.src.to_string() + " len=" +
                     std::to_string(s->data.size()) + " data=" + Term::plain(s->data).render());
      send_tcp(node, c, tcpflag::ACK, "", "");
    } else {
      send_tcp(node, c, tcpflag::ACK, "", "dup-ack");
    }
    return;
  }
  if (s->has(tcpflag::FIN)) {
    c.rcv_nxt += 1;
    send_tcp(node, c, tcpflag::ACK, "", "");
    c.state = c.state == TcpState::Closing ? TcpState::Closed : TcpState::Closing;
    net_->emit(node, Action::Note, Layer::Transport, "fin " + c.quad().to_string());
    return;
  }
  if (s->has(tcpflag::ACK) && seq_after(s->ack, c.snd_nxt)) {
    // peer acknowledges bytes this end never sent: try to resynchronise
    if (c.resync_count >= hs.storm_threshold) {
      c.state = TcpState::Closed;
      net_->emit(node, Action::Note, Layer::Transport,
                 "storm-exhausted close " + c.quad().to_string() + " resyncs=" + std::to_string(c.resync_count));
      return;
    }
    ++c.resync_count;
    send_tcp(node, c, tcpflag::ACK, "", "resync-ack");
    return;
  }
  if (s->seq != c.rcv_nxt) send_tcp(node, c, tcpflag::ACK, "", "dup-ack");
}

// ---------------------------------------------------------------------------
// NetChannel

std::optional<Term> NetChannel::deliver(const std::string& from, const std::string& to, const std::string& label,
                                        const Term& msg) {
  inet_.bind_app(from, kPort);
  inet_.bind_app(to, kPort);
  const auto before = inet_.inbox(to, kPort).size();
  inet_.send_udp(from, inet_.primary_ip(to), kPort, kPort, Term::pair(Term::plain(label), msg));
  inet_.run();
  const auto& box = inet_.inbox(to, kPort);
  if (box.size() == before) return std::nullopt;
  const auto& got = box.back().data;
  if (!got.is(Term::Kind::Pair)) return got;
  return got.right();
}

void NetChannel::note(const std::string& node, const std::string& text) {
  inet_.emit(node, Action::Note, Layer::Application, text);
}

ipsec::SaPair secure_flow(Internetwork& inet, const std::string& sender, const std::string& receiver,
                          ipsec::Protocol p, Channel& ch) {
  auto& rx = inet.ipsec_endpoint(receiver);
  auto& tx = inet.ipsec_endpoint(sender);
  ipsec::ike_establish(rx, tx, ch);
  ipsec::Proposal prop;
  prop.protocol = p;
  prop.hmacs = {"hmac-sha256", "hmac-sha1"};
  if (p == ipsec::Protocol::ESP) {
    prop.ciphers = {"aes128", "3des"};
    prop.kdfs = {"kdf-sha256"};
  }
  auto pair = ipsec::sa_establish(rx, tx, prop, ipsec::default_ranks(), inet.keys(), ch);
  inet.host(sender).ipsec_out[rx.ip] = p;
  inet.host(receiver).ipsec_required_from.insert(tx.ip);
  return pair;
}

}  // namespace netsec::stack
