#include "netsec/attacks.hpp"

#include <algorithm>
#include <memory>
#include <queue>
#include <set>
#include <sstream>

#include "netsec/error.hpp"
#include "netsec/hash.hpp"

namespace netsec::attacks {

using simnet::Action;
using simnet::Layer;
using simnet::TraceFilter;
using stack::ConnKey;
using stack::HookPoint;
using stack::HookResult;
using stack::TcpState;
using symcrypto::Key;

std::int64_t AttackReport::metric(const std::string& key) const {
  auto it = metrics.find(key);
  if (it == metrics.end()) throw Error(Errc::InvalidArgument, name + " has no metric " + key);
  return it->second;
}

std::string AttackReport::summary() const {
  std::string out = name + " success=" + (success ? "1" : "0");
  for (const auto& [k, v] : metrics) out += " " + k + "=" + std::to_string(v);
  return out;
}

const std::vector<std::string>& attack_names() {
  static const std::vector<std::string> names{"wiretap", "nic_clone",  "hijack",    "mitm",      "echo_chargen",
                                              "smurf",   "redirect",   "dns_poison", "syn_flood", "ddos"};
  return names;
}

namespace {

std::size_t count(const Internetwork& inet, std::optional<std::string> node, std::optional<Action> a,
                  std::optional<Layer> l, const std::string& needle, std::size_t from) {
  TraceFilter f;
  f.node = std::move(node);
  f.action = a;
  f.layer = l;
  f.contains = needle;
  f.from_index = from;
  return simnet::count_events(inet.net().trace(), f);
}

std::size_t mark(const Internetwork& inet) { return inet.net().trace().size(); }

std::optional<TcpSegment> tcp_of(const IpDatagram& d) {
  if (const auto* s = std::get_if<TcpSegment>(&d.payload)) return *s;
  // AH leaves the transport header readable
  if (const auto* ah = std::get_if<AhPacket>(&d.payload); ah && ah->header.next_header == proto::TCP) {
    auto p = term_to_transport(proto::TCP, ah->inner);
    if (const auto* s = std::get_if<TcpSegment>(&p)) return *s;
  }
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------

AttackReport wiretap_capture(Internetwork& inet, const std::string& a, const std::string& b,
                             const std::string& observer, const Traffic& traffic) {
  auto h = inet.net().attach_tap(a, b, observer);
  if (traffic) traffic(inet);
  inet.run();
  AttackReport r;
  r.name = "wiretap";
  r.metrics["frames_captured"] = static_cast<std::int64_t>(inet.net().capture(h).frames.size());
  r.success = r.metrics["frames_captured"] > 0;
  return r;
}

AttackReport reprogram_nic(Internetwork& inet, const std::string& intruder, const std::string& victim, bool reinject,
                           const Traffic& traffic) {
  auto& net = inet.net();
  std::optional<std::size_t> domain;
  for (auto s : net.segments_of(intruder)) {
    if (net.segment(s).is_domain && net.segment(s).has(victim)) domain = s;
  }
  if (!domain) throw Error(Errc::NotSameDomain, intruder + " and " + victim);

  struct State {
    bool active = true;
    std::int64_t stolen = 0;
    std::int64_t reinjected = 0;
  };
  auto st = std::make_shared<State>();
  const HwAddr victim_hw = net.assigned_hw(victim);
  net.add_observer(intruder, [st, &net, intruder, victim, victim_hw, reinject](const Frame& f, std::size_t seg) {
    if (!st->active || f.dst_hw != victim_hw) return false;
    ++st->stolen;
    if (reinject) {
      net.transmit_to(intruder, seg, f, victim);
      ++st->reinjected;
    }
    return true;
  });
  net.reprogram_nic(intruder, victim_hw);

  const auto start = mark(inet);
  if (traffic) traffic(inet);
  inet.run();
  st->active = false;

  AttackReport r;
  r.name = "nic_clone";
  r.metrics["frames_stolen"] = st->stolen;
  r.metrics["frames_reinjected"] = st->reinjected;
  r.metrics["victim_received"] =
      static_cast<std::int64_t>(count(inet, victim, Action::Recv, Layer::Link, "", start));
  r.success = st->stolen > 0;
  return r;
}

AttackReport hijack_session(Internetwork& inet, const std::string& attacker, const HijackTarget& target,
                            const std::string& payload, int storm_threshold) {
  auto& net = inet.net();
  const ConnKey& k = target.conn;
  auto taps = net.taps_of(attacker);
  if (taps.empty()) throw Error(Errc::NoTap, attacker + " has no tap");

  // the most recent client->server segment any of the attacker's taps saw
  std::optional<TcpSegment> last;
  for (auto h : taps) {
    for (const auto& f : net.capture(h).frames) {
      if (f.dgram.src != k.local_ip || f.dgram.dst != k.remote_ip) continue;
      auto s = tcp_of(f.dgram);
      if (s && s->src_port == k.local_port && s->dst_port == k.remote_port) last = s;
    }
  }
  if (!last) throw Error(Errc::NoTap, attacker + " saw nothing of " + k.local_ip.to_string());

  std::uint32_t predicted = last->seq + static_cast<std::uint32_t>(last->data.size());
  if (last->has(tcpflag::SYN) || last->has(tcpflag::FIN)) ++predicted;

  inet.host(target.client).storm_threshold = storm_threshold;
  const auto start = mark(inet);
  TcpSegment forged;
  forged.src_port = k.local_port;
  forged.dst_port = k.remote_port;
  forged.seq = predicted;
  forged.ack = last->ack;
  forged.flags = tcpflag::ACK;
  forged.data = payload;
  inet.send_raw_tcp(attacker, k.local_ip, k.remote_ip, forged);
  inet.run();

  const auto server = inet.owner_of(k.remote_ip).value_or("");
  const std::string shown = "data=" + Term::plain(payload).render();
  AttackReport r;
  r.name = "hijack";
  r.metrics["predicted_seq"] = predicted;
  r.metrics["injected"] =
      payload.empty() ? 0
                      : static_cast<std::int64_t>(count(inet, server, Action::Recv, Layer::Application, shown, start));
  r.metrics["storm_acks"] =
      static_cast<std::int64_t>(count(inet, std::nullopt, Action::Send, Layer::Transport, "[resync-ack]", start) +
                                count(inet, std::nullopt, Action::Send, Layer::Transport, "[dup-ack]", start));
  r.metrics["client_closed"] =
      count(inet, target.client, Action::Note, Layer::Transport, "storm-exhausted close", start) > 0 ? 1 : 0;
  r.success = r.metrics["injected"] > 0;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

/// True when every a-b path passes through `via`.
bool separates(const Internetwork& inet, const std::string& via, const std::string& a, const std::string& b) {
  const auto& net = inet.net();
  std::set<std::string> seen{a, via};
  std::queue<std::string> todo;
  todo.push(a);
  while (!todo.empty()) {
    auto n = todo.front();
    todo.pop();
    if (n == b) return false;
    for (auto s : net.segments_of(n)) {
      for (const auto& m : net.segment(s).members) {
        if (seen.insert(m).second) todo.push(m);
      }
    }
  }
  return true;
}

}  // namespace

AttackReport mitm_pubkey(Internetwork& inet, const std::string& attacker, const std::string& a, const std::string& b,
                         const std::string& message, const std::optional<std::string>& rewrite, bool verify_certs) {
  if (!inet.is_router(attacker) || !separates(inet, attacker, a, b)) {
    throw Error(Errc::NotOnPath, attacker + " between " + a + " and " + b);
  }
  auto& keys = inet.keys();
  const auto kb = keys.keygen_pair(b);
  const auto km = keys.keygen_pair(attacker);
  symcrypto::TrustStore a_trust;
  a_trust.trusted_issuers = {"CA"};

  struct State {
    bool active = true;
    std::optional<Key> real_b;
    std::int64_t intercepted = 0;
    std::int64_t tampered = 0;
  };
  auto st = std::make_shared<State>();
  inet.add_hook(attacker, HookPoint::Transit,
                [st, km, rewrite](Internetwork& net, const std::string& node, IpDatagram& d) {
                  auto* u = std::get_if<UdpDatagram>(&d.payload);
                  if (!st->active || !u || u->dst_port != stack::NetChannel::kPort || !u->data.is(Term::Kind::Pair)) {
                    return HookResult::Pass;
                  }
                  const auto label = u->data.left().bytes();
                  Term body = u->data.right();
                  if (label == "pubkey" && body.is(Term::Kind::Cert)) {
                    st->real_b = body.cert_key();
                    body = symcrypto::tamper(body, km.pub);
                    net.emit(node, Action::Note, Layer::Application, "mitm substitute " + body.render());
                  } else if (label == "msg" && st->real_b) {
                    try {
                      auto plain = symcrypto::open(km.prv, body);
                      ++st->intercepted;
                      net.emit(node, Action::Note, Layer::Application, "mitm read " + plain.render());
                      if (rewrite && plain.bytes() != *rewrite) {
                        plain = Term::plain(*rewrite);
                        ++st->tampered;
                      }
                      body = symcrypto::seal(*st->real_b, plain);
                    } catch (const Error&) {
                      return HookResult::Pass;
                    }
                  } else {
                    return HookResult::Pass;
                  }
                  u->data = Term::pair(u->data.left(), body);
                  return HookResult::Pass;
                });

  stack::NetChannel ch(inet);
  AttackReport r;
  r.name = "mitm";
  r.metrics["detected"] = 0;
  auto got_cert = ch.deliver(b, a, "pubkey", symcrypto::cert_issue("CA", b, kb.pub));
  std::optional<Key> used;
  if (got_cert && got_cert->is(Term::Kind::Cert)) {
    if (verify_certs && !symcrypto::cert_verify(a_trust, *got_cert)) {
      ch.note(a, "cert_verify false " + got_cert->render());
      r.metrics["detected"] = 1;
    } else {
      used = got_cert->cert_key();
    }
  }
  if (used) {
    auto got = ch.deliver(a, b, "msg", symcrypto::seal(*used, Term::plain(message)));
    if (got) {
      try {
        auto text = symcrypto::open(kb.prv, *got).bytes();
        ch.note(b, "reads " + Term::plain(text).render());
        r.notes.push_back(b + " received: " + text);
      } catch (const Error& e) {
        ch.note(b, std::string("cannot open: ") + std::string(to_string(e.code())));
      }
    }
  } else {
    r.notes.push_back(a + " aborted before sending");
  }
  st->active = false;
  r.metrics["intercepted"] = st->intercepted;
  r.metrics["tampered"] = st->tampered;
  r.success = st->intercepted > 0 && r.metrics["detected"] == 0;
  return r;
}

// ---------------------------------------------------------------------------

AttackReport echo_chargen(Internetwork& inet, const std::string& attacker, const std::string& host_a,
                          const std::string& host_b, std::optional<std::uint64_t> budget) {
  struct State {
    bool active = true;
    std::int64_t max_len = -1;
    std::int64_t min_len = -1;
    std::int64_t replies = 0;
  };
  auto st = std::make_shared<State>();
  inet.add_hook(host_a, HookPoint::Outbound, [st](Internetwork&, const std::string&, IpDatagram& d) {
    const auto* u = std::get_if<UdpDatagram>(&d.payload);
    if (st->active && u && u->src_port == stack::kChargenPort) {
      const auto n = static_cast<std::int64_t>(u->data.is(Term::Kind::Plain) ? u->data.bytes().size() : 0);
      st->max_len = std::max(st->max_len, n);
      st->min_len = st->min_len < 0 ? n : std::min(st->min_len, n);
      ++st->replies;
    }
    return HookResult::Pass;
  });

  const auto saved = inet.net().max_events();
  if (budget) inet.net().set_max_events(*budget);
  const auto start = mark(inet);
  inet.send_udp(attacker, inet.primary_ip(host_a), stack::kEchoPort, stack::kChargenPort, Term::plain("x"),
                inet.primary_ip(host_b));
  const auto ended = inet.run();
  inet.net().set_max_events(saved);
  st->active = false;

  AttackReport r;
  r.name = "echo_chargen";
  r.metrics["messages_exchanged"] =
      static_cast<std::int64_t>(count(inet, host_a, Action::Send, Layer::Transport, "udp", start) +
                                count(inet, host_b, Action::Send, Layer::Transport, "udp", start));
  r.metrics["max_len"] = std::max<std::int64_t>(st->max_len, 0);
  r.metrics["min_len"] = std::max<std::int64_t>(st->min_len, 0);
  r.metrics["chargen_replies"] = st->replies;
  r.metrics["hit_budget"] = ended == "budget" ? 1 : 0;
  if (!inet.host(host_a).chargen_enabled) r.notes.push_back(host_a + " chargen disabled");
  if (!inet.host(host_b).echo_enabled) r.notes.push_back(host_b + " echo disabled");
  r.success = ended == "budget";
  return r;
}

AttackReport smurf(Internetwork& inet, const std::string& attacker, IpAddr victim, const std::string& domain) {
  auto& net = inet.net();
  auto seg = net.find_domain(domain);
  if (!seg) throw Error(Errc::UnknownDomain, domain);
  std::optional<IpAddr> bcast;
  for (const auto& m : net.segment(*seg).members) {
    const auto& spec = net.node(m);
    if (spec.kind == simnet::NodeKind::Host && !spec.addrs.empty()) {
      bcast = spec.addrs.front().prefix().broadcast();
      break;
    }
  }
  if (!bcast) throw Error(Errc::UnknownDomain, domain + " has no numbered host");

  const auto victim_node = inet.owner_of(victim);
  const auto start = mark(inet);
  inet.send_icmp_echo(attacker, *bcast, 0x5f, 1, victim);
  inet.run();
  AttackReport r;
  r.name = "smurf";
  r.metrics["replies_to_victim"] =
      victim_node ? static_cast<std::int64_t>(count(inet, *victim_node, Action::Recv, Layer::Internet,
                                                    "icmp echo-reply", start))
                  : 0;
  r.metrics["replies_sent"] =
      static_cast<std::int64_t>(count(inet, std::nullopt, Action::Send, Layer::Internet, "icmp echo-reply", start));
  r.success = r.metrics["replies_to_victim"] > 0;
  return r;
}

namespace {

std::int64_t send_probes(Internetwork& inet, const std::vector<Probe>& probes) {
  std::map<std::string, std::size_t> before;
  for (const auto& p : probes) {
    inet.bind_app(p.to, kProbePort);
    before.try_emplace(p.to, inet.inbox(p.to, kProbePort).size());
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    inet.send_udp(probes[i].from, inet.primary_ip(probes[i].to), kProbePort, kProbePort,
                  Term::plain("probe " + std::to_string(i)));
  }
  inet.run();
  std::int64_t n = 0;
  for (const auto& [to, b] : before) n += static_cast<std::int64_t>(inet.inbox(to, kProbePort).size() - b);
  return n;
}

}  // namespace

AttackReport redirect_blackhole(Internetwork& inet, const std::string& router, const std::vector<Probe>& probes) {
  if (!inet.is_router(router)) throw Error(Errc::NotARouter, router);
  inet.converge();
  AttackReport r;
  r.name = "redirect";
  r.metrics["baseline_delivered"] = send_probes(inet, probes);

  auto& pol = inet.policy(router);
  pol.advertise_zero = true;
  pol.blackhole = true;
  inet.converge();
  std::int64_t captured = 0;
  for (const auto& n : inet.router_neighbors(router)) {
    for (const auto& [prefix, route] : inet.host(n).routes) captured += route.next_hop == router ? 1 : 0;
  }
  r.metrics["routes_captured"] = captured;
  const auto start = mark(inet);
  r.metrics["delivered"] = send_probes(inet, probes);
  r.metrics["packets_blackholed"] =
      static_cast<std::int64_t>(count(inet, router, Action::Drop, Layer::Internet, "blackhole", start));
  r.success = captured > 0 && r.metrics["delivered"] == 0 && r.metrics["packets_blackholed"] > 0;
  return r;
}

AttackReport dns_poison(Internetwork& inet, const std::string& attacker, const std::string& server,
                        const std::string& name, IpAddr bogus, std::uint64_t ttl,
                        const std::vector<std::string>& clients) {
  auto& dns = inet.dns_server(server);
  const IpAddr server_ip = inet.primary_ip(server);
  const IpAddr claimed = dns.upstream.value_or(inet.primary_ip(attacker));
  inet.send_udp(attacker, server_ip, stack::kDnsPort, stack::kDnsPort,
                Term::plain("ANSWER " + name + " " + bogus.to_string() + " " + std::to_string(ttl)), claimed);
  inet.run();

  auto resolve = [&](const std::string& client) -> std::optional<IpAddr> {
    auto port = inet.dns_query(client, server_ip, name);
    inet.run();
    const auto& box = inet.inbox(client, port);
    if (box.empty()) return std::nullopt;
    std::istringstream in(box.back().data.bytes());
    std::string verb, n, ip;
    in >> verb >> n >> ip;
    if (verb != "ANSWER") return std::nullopt;
    return IpAddr::parse(ip);
  };

  AttackReport r;
  r.name = "dns_poison";
  std::int64_t poisoned = 0;
  for (const auto& c : clients) poisoned += resolve(c) == bogus ? 1 : 0;
  r.metrics["poisoned_answers"] = poisoned;

  // wait out whatever is cached, then ask again
  auto it = dns.cache.find(name);
  const std::uint64_t expiry = it == dns.cache.end() ? inet.now() : it->second.expiry;
  if (inet.now() <= expiry) {
    inet.net().schedule(expiry + 1, [] {});
    inet.run();
  }
  std::int64_t recovered = 0;
  if (!clients.empty()) {
    auto after = resolve(clients.front());
    recovered = after && *after != bogus ? 1 : 0;
  }
  r.metrics["recovered"] = recovered;
  r.success = poisoned > 0;
  return r;
}

namespace {

struct FloodCounts {
  std::int64_t admitted = 0;
  std::int64_t discarded = 0;
};

FloodCounts flood_counts(const Internetwork& inet, const std::string& server, std::size_t start) {
  return {static_cast<std::int64_t>(count(inet, server, Action::Note, Layer::Transport, "syn-queue admit", start)),
          static_cast<std::int64_t>(count(inet, server, Action::Drop, Layer::Transport, "syn-queue-full", start))};
}

void spoofed_syns(Internetwork& inet, const std::string& from, IpAddr dst, std::uint16_t port, int n,
                  const std::vector<IpAddr>& pool, std::uint16_t first_port) {
  for (int i = 0; i < n; ++i) {
    TcpSegment s;
    s.src_port = static_cast<std::uint16_t>(first_port + i);
    s.dst_port = port;
    s.seq = static_cast<std::uint32_t>(derive(inet.seed(), "flood:" + from, static_cast<std::uint64_t>(i)));
    s.flags = tcpflag::SYN;
    inet.send_raw_tcp(from, pool[static_cast<std::size_t>(i) % pool.size()], dst, s);
  }
}

/// Genuine SYN now, then again once every queued entry has timed out.
/// Returns (rejected during saturation, admitted afterwards).
std::pair<bool, bool> probe_queue(Internetwork& inet, const std::string& genuine, const std::string& server,
                                  std::uint16_t port) {
  const IpAddr server_ip = inet.primary_ip(server);
  auto k1 = inet.tcp_open(genuine, server_ip, port);
  inet.run();
  const bool rejected = inet.conn(genuine, k1)->state != TcpState::Established;

  const auto& q = inet.host(server).synq;
  std::uint64_t oldest = inet.now();
  for (const auto& e : q.entries) oldest = std::min(oldest, e.second);
  // the SYN sent at oldest+timeout arrives one tick later, just past the timeout
  auto k2 = std::make_shared<std::optional<ConnKey>>();
  inet.net().schedule(std::max(inet.now(), oldest + q.timeout),
                      [&inet, k2, genuine, server_ip, port] { *k2 = inet.tcp_open(genuine, server_ip, port); });
  inet.run();
  const bool recovered = k2->has_value() && inet.conn(genuine, **k2)->state == TcpState::Established;
  return {rejected, recovered};
}

}  // namespace

AttackReport syn_flood(Internetwork& inet, const std::string& attacker, const std::string& server, std::uint16_t port,
                       int count_syns, const std::vector<IpAddr>& spoof_pool, const std::string& genuine) {
  if (spoof_pool.empty()) throw Error(Errc::InvalidArgument, "empty spoof pool");
  for (auto ip : spoof_pool) {
    if (inet.owner_of(ip)) throw Error(Errc::InvalidArgument, ip.to_string() + " belongs to a live host");
  }
  inet.tcp_listen(server, port);
  const auto start = mark(inet);
  spoofed_syns(inet, attacker, inet.primary_ip(server), port, count_syns, spoof_pool, 1024);
  inet.run();
  const auto c = flood_counts(inet, server, start);
  const auto [rejected, recovered] = probe_queue(inet, genuine, server, port);

  AttackReport r;
  r.name = "syn_flood";
  r.metrics["admitted"] = c.admitted;
  r.metrics["discarded"] = c.discarded;
  r.metrics["genuine_rejected"] = rejected ? 1 : 0;
  r.metrics["genuine_recovered"] = recovered ? 1 : 0;
  r.metrics["peak_queue"] = static_cast<std::int64_t>(inet.host(server).synq.peak);
  r.success = rejected;
  return r;
}

AttackReport ddos_campaign(Internetwork& inet, const std::string& attacker, const std::vector<std::string>& zombies,
                           const std::string& victim, std::uint16_t port, int per_zombie, const std::string& genuine) {
  for (const auto& z : zombies) {
    if (!inet.policy(z).compromised) throw Error(Errc::ZombieNotCompromised, z);
  }
  inet.tcp_listen(victim, port);
  const IpAddr victim_ip = inet.primary_ip(victim);
  const std::string order =
      "launch " + victim_ip.to_string() + " " + std::to_string(port) + " " + std::to_string(per_zombie);
  for (const auto& z : zombies) {
    inet.bind_app(z, stack::kControlPort);
    inet.send_udp(attacker, inet.primary_ip(z), stack::kFirstEphemeral, stack::kControlPort, Term::plain(order));
  }
  inet.run();

  const auto start = mark(inet);
  std::int64_t signalled = 0;
  for (std::size_t i = 0; i < zombies.size(); ++i) {
    const auto& box = inet.inbox(zombies[i], stack::kControlPort);
    if (box.empty() || box.back().data.bytes() != order) continue;
    ++signalled;
    auto pool = unused_addresses(inet, static_cast<std::size_t>(std::max(per_zombie, 1)),
                                 static_cast<std::uint32_t>(i + 1));
    spoofed_syns(inet, zombies[i], victim_ip, port, per_zombie, pool, 2048);
  }
  inet.run();
  const auto c = flood_counts(inet, victim, start);
  const auto [rejected, recovered] = probe_queue(inet, genuine, victim, port);

  AttackReport r;
  r.name = "ddos";
  r.metrics["zombies"] = static_cast<std::int64_t>(zombies.size());
  r.metrics["signalled"] = signalled;
  r.metrics["syns_received"] = c.admitted + c.discarded;
  r.metrics["victim_saturated"] = rejected ? 1 : 0;
  r.metrics["victim_recovered"] = recovered ? 1 : 0;
  r.success = rejected;
  return r;
}

std::shared_ptr<TamperTap> tamper_in_flight(Internetwork& inet, const std::string& node, std::size_t nth) {
  auto tap = std::make_shared<TamperTap>();
  const Key adversary = inet.keys().keygen_symmetric(node);
  auto hook = [tap, nth, adversary](Internetwork& net, const std::string& at, IpDatagram& d) {
    auto* u = std::get_if<UdpDatagram>(&d.payload);
    if (!u || u->dst_port != stack::NetChannel::kPort || !u->data.is(Term::Kind::Pair)) return HookResult::Pass;
    if (tap->seen++ != nth) return HookResult::Pass;
    const Term body = symcrypto::tamper(u->data.right(), adversary);
    net.emit(at, Action::Note, Layer::Application, "tamper " + u->data.left().bytes());
    u->data = Term::pair(u->data.left(), body);
    ++tap->tampered;
    return HookResult::Pass;
  };
  for (auto p : {HookPoint::Outbound, HookPoint::Transit, HookPoint::Inbound}) inet.add_hook(node, p, hook);
  return tap;
}

std::vector<IpAddr> unused_addresses(const Internetwork& inet, std::size_t n, std::uint32_t salt) {
  std::vector<IpAddr> out;
  // 198.18.0.0/15 is reserved for benchmarking, so nothing real lives there
  std::uint32_t v = 0xC6120000u + (salt << 8) + 1;
  while (out.size() < n) {
    if (!inet.owner_of(IpAddr(v))) out.emplace_back(v);
    ++v;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace topo {

using simnet::TopologySpec;

TopologySpec smurf(int hosts) {
  TopologySpec s;
  s.router("R", {"10.1.0.1/24", "10.2.0.1/24", "10.3.0.1/24"});
  std::vector<std::string> lan{"R"};
  for (int i = 1; i <= hosts; ++i) {
    const auto name = "H" + std::to_string(i);
    s.host(name, {"10.1.0." + std::to_string(10 + i) + "/24"}, "R");
    lan.push_back(name);
  }
  s.host("V", {"10.2.0.10/24"}, "R").host("M", {"10.3.0.10/24"}, "R");
  s.lan("AMP", lan).link("R", "V").link("R", "M");
  return s;
}

TopologySpec lan_trio(const std::string& a, const std::string& b, const std::string& m) {
  TopologySpec s;
  s.host(a, {"10.0.0.1/24"}).host(b, {"10.0.0.2/24"}).host(m, {"10.0.0.66/24"});
  s.lan("L", {a, b, m});
  return s;
}

TopologySpec mitm_line() {
  TopologySpec s;
  s.host("A", {"10.0.1.10/24"}, "M").host("B", {"10.0.2.10/24"}, "M");
  s.router("M", {"10.0.1.1/24", "10.0.2.1/24"});
  s.link("A", "M").link("M", "B");
  return s;
}

TopologySpec redirect() {
  TopologySpec s;
  s.router("R1", {"10.0.0.1/24"}).router("R2", {"10.0.0.2/24"}).router("R3", {"10.0.0.3/24"});
  s.host("S", {"10.0.0.10/24"}, "R1");
  s.lan("P0", {"R1", "R2", "R3", "S"});
  s.router("X").router("C");
  for (const char* r : {"R1", "R2", "R3"}) s.link("X", r).link("C", r);
  for (int k = 1; k <= 4; ++k) {
    const auto e = "E" + std::to_string(k);
    const auto h = "H" + std::to_string(k);
    const auto net = "10." + std::to_string(k) + ".0.";
    s.router(e, {net + "1/24"});
    s.host(h, {net + "10/24"}, e);
    s.link("C", e).lan("L" + std::to_string(k), {e, h});
  }
  return s;
}

TopologySpec dns(int clients) {
  TopologySpec s;
  s.host("D", {"10.0.0.53/24"}).host("U", {"10.0.0.1/24"}).host("M", {"10.0.0.66/24"});
  std::vector<std::string> lan{"D", "U", "M"};
  for (int i = 1; i <= clients; ++i) {
    const auto name = "C" + std::to_string(i);
    s.host(name, {"10.0.0." + std::to_string(100 + i) + "/24"});
    lan.push_back(name);
  }
  s.lan("L", lan);
  return s;
}

TopologySpec flood(int zombies) {
  TopologySpec s;
  s.host("S", {"10.0.0.2/24"}).host("G", {"10.0.0.3/24"}).host("M", {"10.0.0.66/24"});
  std::vector<std::string> lan{"S", "G", "M"};
  for (int i = 1; i <= zombies; ++i) {
    const auto name = "Z" + std::to_string(i);
    s.host(name, {"10.0.0." + std::to_string(10 + i) + "/24"});
    lan.push_back(name);
  }
  s.lan("L", lan);
  return s;
}

}  // namespace topo

}  // namespace netsec::attacks
