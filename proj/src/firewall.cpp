#include "netsec/firewall.hpp"

#include <algorithm>
#include <sstream>

#include "netsec/error.hpp"

namespace netsec::firewall {

using simnet::Action;
using simnet::Layer;
using stack::HookPoint;
using stack::HookResult;
using stack::Quad;
using stack::TcpState;

std::string_view to_string(Direction d) { return d == Direction::Ingress ? "ingress" : "egress"; }
std::string_view to_string(Verdict v) { return v == Verdict::Allow ? "allow" : "deny"; }

std::string Decision::render() const {
  std::string out(to_string(verdict));
  if (!reason.empty()) out += " (" + reason + ")";
  return out;
}

namespace {

Decision allow(std::string why) { return {Verdict::Allow, std::move(why)}; }
Decision deny(std::string why) { return {Verdict::Deny, std::move(why)}; }

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string strip_comment(const std::string& line) {
  auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

[[noreturn]] void syntax(int line_no, const std::string& msg) {
  throw Error(Errc::SyntaxError, "line " + std::to_string(line_no) + ": " + msg);
}

std::optional<std::pair<std::uint16_t, std::uint16_t>> ports_of(const IpDatagram& d) {
  if (const auto* t = std::get_if<TcpSegment>(&d.payload)) return std::make_pair(t->src_port, t->dst_port);
  if (const auto* u = std::get_if<UdpDatagram>(&d.payload)) return std::make_pair(u->src_port, u->dst_port);
  return std::nullopt;
}

std::optional<std::uint8_t> parse_proto(const std::string& w) {
  if (w == "*") return std::nullopt;
  if (w == "tcp") return proto::TCP;
  if (w == "udp") return proto::UDP;
  if (w == "icmp") return proto::ICMP;
  if (w == "esp") return proto::ESP;
  if (w == "ah") return proto::AH;
  if (w == "ipip") return proto::IPIP;
  std::size_t used = 0;
  const int n = std::stoi(w, &used);
  if (used != w.size() || n < 0 || n > 255) throw Error(Errc::SyntaxError, "protocol " + w);
  return static_cast<std::uint8_t>(n);
}

std::string proto_name(std::optional<std::uint8_t> p) {
  if (!p) return "*";
  switch (*p) {
    case proto::TCP: return "tcp";
    case proto::UDP: return "udp";
    case proto::ICMP: return "icmp";
    case proto::ESP: return "esp";
    case proto::AH: return "ah";
    case proto::IPIP: return "ipip";
    default: return std::to_string(*p);
  }
}

std::optional<Prefix> parse_prefix(const std::string& w) {
  if (w == "*") return std::nullopt;
  if (w.find('/') == std::string::npos) return Prefix{IpAddr::parse(w), 32};
  return Prefix::parse(w);
}

bool in_any(const std::vector<Prefix>& nets, IpAddr ip) {
  return std::any_of(nets.begin(), nets.end(), [&](const Prefix& p) { return p.contains(ip); });
}

bool mentions(const IpDatagram& d, const std::vector<std::string>& tokens, std::string* hit) {
  for (const auto& text : symcrypto::exposed_plaintexts(transport_to_term(d.payload))) {
    for (const auto& t : tokens) {
      if (!t.empty() && text.find(t) != std::string::npos) {
        *hit = t;
        return true;
      }
    }
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Packet filter

PortRange PortRange::parse(const std::string& text) {
  if (text == "*") return {};
  auto to_port = [&](const std::string& s) {
    std::size_t used = 0;
    long v = -1;
    try {
      v = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || v < 0 || v > 65535) throw Error(Errc::SyntaxError, "port " + text);
    return static_cast<std::uint16_t>(v);
  };
  auto dash = text.find('-');
  if (dash == std::string::npos) {
    auto p = to_port(text);
    return {p, p};
  }
  PortRange r{to_port(text.substr(0, dash)), to_port(text.substr(dash + 1))};
  if (r.lo > r.hi) throw Error(Errc::SyntaxError, "empty port range " + text);
  return r;
}

std::string PortRange::to_string() const {
  if (any()) return "*";
  if (lo == hi) return std::to_string(lo);
  return std::to_string(lo) + "-" + std::to_string(hi);
}

bool FirewallRule::matches(const IpDatagram& d, Direction dir) const {
  if (dir != direction) return false;
  if (protocol && *protocol != d.protocol) return false;
  if (src && !src->contains(d.src)) return false;
  if (dst && !dst->contains(d.dst)) return false;
  if (src_ports.any() && dst_ports.any()) return true;
  auto ports = ports_of(d);
  if (!ports) return false;
  return src_ports.contains(ports->first) && dst_ports.contains(ports->second);
}

std::string FirewallRule::to_string() const {
  std::ostringstream o;
  o << position << ' ' << firewall::to_string(direction) << ' ' << firewall::to_string(action) << ' '
    << proto_name(protocol) << ' ' << (src ? src->to_string() : "*") << ' ' << src_ports.to_string() << ' '
    << (dst ? dst->to_string() : "*") << ' ' << dst_ports.to_string();
  return o.str();
}

void Ruleset::add(FirewallRule r) {
  auto at = std::upper_bound(rules.begin(), rules.end(), r.position,
                             [](int pos, const FirewallRule& x) { return pos < x.position; });
  rules.insert(at, std::move(r));
}

Ruleset Ruleset::parse(const std::string& text) {
  Ruleset rs;
  std::istringstream in(text);
  bool have_default = false;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto w = words(strip_comment(line));
    if (w.empty()) continue;
    if (!have_default) {
      if (w.size() != 2 || w[0] != "default" || (w[1] != "deny" && w[1] != "allow")) {
        syntax(line_no, "ruleset must start with 'default deny|allow'");
      }
      rs.default_policy = w[1] == "deny" ? Verdict::Deny : Verdict::Allow;
      have_default = true;
      continue;
    }
    if (w[0] == "protect") {
      if (w.size() != 2) syntax(line_no, "protect <prefix>");
      try {
        rs.protected_nets.push_back(Prefix::parse(w[1]));
      } catch (const Error& e) {
        syntax(line_no, e.what());
      }
      continue;
    }
    if (w.size() != 8) syntax(line_no, "expected 8 fields, got " + std::to_string(w.size()));
    FirewallRule r;
    try {
      std::size_t used = 0;
      r.position = std::stoi(w[0], &used);
      if (used != w[0].size()) syntax(line_no, "position " + w[0]);
    } catch (const std::logic_error&) {
      syntax(line_no, "position " + w[0]);
    }
    if (w[1] == "ingress") r.direction = Direction::Ingress;
    else if (w[1] == "egress") r.direction = Direction::Egress;
    else syntax(line_no, "direction " + w[1]);
    if (w[2] == "allow") r.action = Verdict::Allow;
    else if (w[2] == "deny") r.action = Verdict::Deny;
    else syntax(line_no, "action " + w[2]);
    try {
      r.protocol = parse_proto(w[3]);
      r.src = parse_prefix(w[4]);
      r.src_ports = PortRange::parse(w[5]);
      r.dst = parse_prefix(w[6]);
      r.dst_ports = PortRange::parse(w[7]);
    } catch (const Error& e) {
      syntax(line_no, e.what());
    } catch (const std::logic_error&) {
      syntax(line_no, "bad field");
    }
    rs.add(r);
  }
  if (!have_default) throw Error(Errc::SyntaxError, "empty ruleset");
  return rs;
}

std::string Ruleset::to_text() const {
  std::string out = "default " + std::string(to_string(default_policy)) + "\n";
  for (const auto& p : protected_nets) out += "protect " + p.to_string() + "\n";
  for (const auto& r : rules) out += r.to_string() + "\n";
  return out;
}

Decision filter_eval(const Ruleset& rs, const IpDatagram& d, Direction dir) {
  if (dir == Direction::Ingress && in_any(rs.protected_nets, d.src)) return deny("spoof");
  for (const auto& r : rs.rules) {
    if (r.matches(d, dir)) return {r.action, "rule " + std::to_string(r.position)};
  }
  return {rs.default_policy, "default"};
}

// ---------------------------------------------------------------------------
// Stateful inspection

bool ConnState::consistent() const {
  std::map<IpAddr, int> counted;
  for (const auto& [q, e] : table) ++counted[q.client_ip];
  for (const auto& [ip, n] : per_ip_conn_count) {
    if (n != 0 && counted[ip] != n) return false;
    if (n == 0 && counted.count(ip) && counted.at(ip) != 0) return false;
  }
  for (const auto& [ip, n] : counted) {
    auto it = per_ip_conn_count.find(ip);
    if (it == per_ip_conn_count.end() || it->second != n) return false;
  }
  return true;
}

Decision stateful_eval(ConnState& st, const IpDatagram& d, Direction dir) {
  const auto* s = std::get_if<TcpSegment>(&d.payload);
  if (!s) return allow("not-tcp");
  const Quad fwd{d.src, s->src_port, d.dst, s->dst_port};
  const Quad rev{d.dst, s->dst_port, d.src, s->src_port};

  auto forget = [&](std::map<Quad, ConnEntry>::iterator it) {
    auto& n = st.per_ip_conn_count[it->first.client_ip];
    if (--n == 0) st.per_ip_conn_count.erase(it->first.client_ip);
    st.table.erase(it);
  };

  if (s->has(tcpflag::SYN) && !s->has(tcpflag::ACK)) {
    if (st.table.count(fwd)) return allow("retransmit");
    if (st.per_ip_conn_count[d.src] >= st.max_conns_per_ip) {
      if (st.per_ip_conn_count[d.src] == 0) st.per_ip_conn_count.erase(d.src);
      return deny("conn-cap");
    }
    st.table[fwd] = ConnEntry{};
    ++st.per_ip_conn_count[d.src];
    return allow("new");
  }

  auto it = st.table.find(fwd);
  const bool from_client = it != st.table.end();
  if (!from_client) it = st.table.find(rev);
  if (it == st.table.end()) return deny("no-connection");
  auto& e = it->second;

  if (s->has(tcpflag::RST) || s->has(tcpflag::FIN)) {
    // both orientations can be tracked when each side opened one
    forget(it);
    if (auto other = st.table.find(from_client ? rev : fwd); other != st.table.end()) forget(other);
    return allow("teardown");
  }
  if (s->has(tcpflag::SYN)) {  // SYN|ACK
    if (from_client || e.state != TcpState::SynSent) return deny("no-connection");
    e.state = TcpState::SynRecv;
    return allow("handshake");
  }
  if (e.state == TcpState::SynRecv && from_client && s->data.empty()) {
    e.state = TcpState::Established;
    return allow("established");
  }
  if (e.state == TcpState::SynRecv && from_client) e.state = TcpState::Established;
  if (e.state != TcpState::Established) return deny("no-connection");
  if (!s->data.empty() && dir == Direction::Egress) {
    auto& total = st.bytes_to_dest[{d.src, d.dst}];
    if (total + s->data.size() > st.max_bytes_to_dest) return deny("data-cap");
    total += s->data.size();
    e.bytes_out += s->data.size();
  }
  return allow("tracked");
}

// ---------------------------------------------------------------------------
// Content, proxy, personal

Decision content_eval(const ServiceRules& rules, const IpDatagram& d) {
  std::string hit;
  if (mentions(d, rules.banned_tokens, &hit)) return deny("content " + hit);
  return allow("content");
}

RelayResult proxy_relay(Internetwork& inet, const ProxyBinding& b, const std::string& client, const Term& request,
                        const ServerApp& app) {
  inet.bind_app(b.proxy, b.port);
  inet.bind_app(b.server, b.port);
  const std::uint16_t client_port = stack::kFirstEphemeral + 777;
  const std::uint16_t relay_port = stack::kFirstEphemeral + 778;
  inet.bind_app(client, client_port);
  inet.bind_app(b.proxy, relay_port);

  auto take = [&](const std::string& node, std::uint16_t port) -> std::optional<stack::AppMessage> {
    const auto& box = inet.inbox(node, port);
    if (box.empty()) return std::nullopt;
    return box.back();
  };
  auto inspect = [&](const stack::AppMessage& m, IpAddr dst, const char* leg) {
    IpDatagram probe;
    probe.src = m.src;
    probe.dst = dst;
    probe.protocol = proto::UDP;
    probe.payload = UdpDatagram{m.src_port, m.dst_port, m.data};
    auto dec = content_eval(b.rules, probe);
    if (!dec.allowed()) {
      inet.emit(b.proxy, Action::Drop, Layer::Application,
                "proxy " + b.service + " " + leg + " " + dec.render() + " " + m.data.render());
      throw Error(Errc::PolicyViolation, b.service + " " + leg + ": " + dec.reason);
    }
  };

  const auto before_proxy = inet.inbox(b.proxy, b.port).size();
  inet.send_udp(client, b.near_ip, client_port, b.port, request);
  inet.run();
  if (inet.inbox(b.proxy, b.port).size() == before_proxy) {
    throw Error(Errc::PolicyViolation, "request never reached the proxy");
  }
  const auto req = *take(b.proxy, b.port);
  inspect(req, b.near_ip, "request");
  inet.emit(b.proxy, Action::Note, Layer::Application, "proxy " + b.service + " relay request");

  const IpAddr server_ip = inet.primary_ip(b.server);
  const auto before_server = inet.inbox(b.server, b.port).size();
  inet.send_udp(b.proxy, server_ip, relay_port, b.port, req.data, b.far_ip);
  inet.run();
  if (inet.inbox(b.server, b.port).size() == before_server) {
    throw Error(Errc::PolicyViolation, "relay never reached " + b.server);
  }
  const auto at_server = *take(b.server, b.port);
  const Term answer = app ? app(at_server.data) : at_server.data;

  const auto before_reply = inet.inbox(b.proxy, relay_port).size();
  inet.send_udp(b.server, at_server.src, b.port, at_server.src_port, answer);
  inet.run();
  if (inet.inbox(b.proxy, relay_port).size() == before_reply) {
    throw Error(Errc::PolicyViolation, "reply never reached the proxy");
  }
  const auto rep = *take(b.proxy, relay_port);
  inspect(rep, b.far_ip, "response");
  inet.emit(b.proxy, Action::Note, Layer::Application, "proxy " + b.service + " relay response");

  const auto before_client = inet.inbox(client, client_port).size();
  inet.send_udp(b.proxy, req.src, b.port, req.src_port, rep.data, b.near_ip);
  inet.run();
  if (inet.inbox(client, client_port).size() == before_client) {
    throw Error(Errc::PolicyViolation, "response never reached " + client);
  }
  return {take(client, client_port)->data, at_server.src};
}

Decision personal_eval(const PersonalPolicy& p, const IpDatagram& d, Direction dir) {
  const IpAddr site = dir == Direction::Ingress ? d.src : d.dst;
  if (in_any(p.blocked_sites, site)) return deny("blocked-site");
  if (!p.allowed_sites.empty() && !in_any(p.allowed_sites, site)) return deny("not-allowed");
  std::string hit;
  if (p.scan && mentions(d, p.virus_tokens, &hit)) return deny("scan " + hit);
  return allow("personal");
}

LayeredResult layered_eval(const Ruleset& filter, const ServiceRules& proxy, const PersonalPolicy& personal,
                           const IpDatagram& d, Direction dir) {
  LayeredResult r;
  r.trail.push_back({"filter", filter_eval(filter, d, dir)});
  if (r.trail.back().decision.allowed()) r.trail.push_back({"proxy", content_eval(proxy, d)});
  if (r.trail.back().decision.allowed()) r.trail.push_back({"personal", personal_eval(personal, d, dir)});
  r.decision = r.trail.back().decision;
  return r;
}

// ---------------------------------------------------------------------------
// Configuration and live installation

FirewallConfig FirewallConfig::parse(const std::string& name, const std::string& text) {
  FirewallConfig cfg;
  cfg.name = name;
  std::string ruleset_text;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    auto w = words(strip_comment(line));
    if (w.empty()) {
      ruleset_text += "\n";
      continue;
    }
    if (w[0] == "stateful") {
      ConnState st;
      for (std::size_t i = 1; i < w.size(); ++i) {
        auto eq = w[i].find('=');
        if (eq == std::string::npos) syntax(line_no, "stateful key=value");
        const auto key = w[i].substr(0, eq);
        std::uint64_t v = 0;
        try {
          v = std::stoull(w[i].substr(eq + 1));
        } catch (const std::logic_error&) {
          syntax(line_no, "number expected in " + w[i]);
        }
        if (key == "conns") st.max_conns_per_ip = static_cast<int>(v);
        else if (key == "bytes") st.max_bytes_to_dest = v;
        else syntax(line_no, "unknown stateful key " + key);
      }
      cfg.stateful = st;
      ruleset_text += "\n";
      continue;
    }
    if (w[0] == "ban") {
      if (w.size() != 2) syntax(line_no, "ban TOKEN");
      cfg.content.banned_tokens.push_back(w[1]);
      ruleset_text += "\n";
      continue;
    }
    if (w[0] == "personal") {
      if (w.size() != 4) syntax(line_no, "personal HOST allow|block|scan ARG");
      auto& p = cfg.personal[w[1]];
      try {
        if (w[2] == "allow") p.allowed_sites.push_back(*parse_prefix(w[3]));
        else if (w[2] == "block") p.blocked_sites.push_back(*parse_prefix(w[3]));
        else if (w[2] == "scan") {
          p.scan = true;
          p.virus_tokens.push_back(w[3]);
        } else syntax(line_no, "personal verb " + w[2]);
      } catch (const Error& e) {
        if (e.code() == Errc::SyntaxError) throw;
        syntax(line_no, e.what());
      } catch (const std::bad_optional_access&) {
        syntax(line_no, "site must not be *");
      }
      ruleset_text += "\n";
      continue;
    }
    ruleset_text += line + "\n";
  }
  cfg.rules = Ruleset::parse(ruleset_text);
  return cfg;
}

SiteFirewall::SiteFirewall(FirewallConfig cfg, std::string gateway)
    : cfg_(std::move(cfg)), gateway_(std::move(gateway)) {}

Direction SiteFirewall::direction_of(const IpDatagram& d) const {
  return in_any(cfg_.rules.protected_nets, d.dst) ? Direction::Ingress : Direction::Egress;
}

void SiteFirewall::install(Internetwork& inet) {
  auto record = [](Internetwork& net, const std::string& node, const std::string& layer, const Decision& dec,
                   Direction dir, const IpDatagram& d) {
    net.emit(node, Action::Note, Layer::Internet,
             "fw:" + layer + " " + std::string(to_string(dir)) + " " + dec.render() + " | " + summarize(d));
  };
  inet.add_hook(gateway_, HookPoint::Transit, [this, record](Internetwork& net, const std::string& node, IpDatagram& d) {
    const auto dir = direction_of(d);
    auto dec = filter_eval(cfg_.rules, d, dir);
    record(net, node, "filter", dec, dir, d);
    if (dec.allowed() && cfg_.stateful) {
      dec = stateful_eval(*cfg_.stateful, d, dir);
      record(net, node, "stateful", dec, dir, d);
    }
    if (dec.allowed() && !cfg_.content.banned_tokens.empty()) {
      dec = content_eval(cfg_.content, d);
      record(net, node, "proxy", dec, dir, d);
    }
    if (dec.allowed()) return HookResult::Pass;
    net.emit(node, Action::Drop, Layer::Internet, "firewall " + cfg_.name + " " + dec.render() + " " + summarize(d));
    return HookResult::Drop;
  });
  for (const auto& [host, policy] : cfg_.personal) {
    for (auto point : {HookPoint::Inbound, HookPoint::Outbound}) {
      const auto dir = point == HookPoint::Inbound ? Direction::Ingress : Direction::Egress;
      inet.add_hook(host, point,
                    [this, record, host = host, dir](Internetwork& net, const std::string& node, IpDatagram& d) {
                      const auto dec = personal_eval(cfg_.personal.at(host), d, dir);
                      record(net, node, "personal", dec, dir, d);
                      if (dec.allowed()) return HookResult::Pass;
                      net.emit(node, Action::Drop, Layer::Internet, "personal-firewall " + dec.render());
                      return HookResult::Drop;
                    });
    }
  }
}

namespace topo {

simnet::TopologySpec site() {
  simnet::TopologySpec s;
  s.host("X", {"198.51.100.7/24"}, "I");
  s.router("I", {"198.51.100.1/24", "203.0.113.1/24", "192.0.2.1/24"});
  s.router("FW", {"203.0.113.2/24", "10.0.0.1/24"});
  s.router("MD", {"192.0.2.2/24", "10.0.1.1/24"});
  s.host("H", {"10.0.0.10/24"}, "FW");
  s.host("B", {"10.0.1.20/24"}, "MD");
  s.link("X", "I").link("I", "FW").link("I", "MD").link("MD", "B");
  s.lan("IN", {"FW", "H"});
  return s;
}

simnet::TopologySpec proxy() {
  simnet::TopologySpec s;
  s.host("P", {"10.0.0.2/24", "198.51.100.2/24"});
  s.host("C", {"10.0.0.5/24"}).host("W", {"10.0.0.80/24"});
  s.host("S", {"198.51.100.80/24"}).host("O", {"198.51.100.5/24"});
  s.lan("IN", {"P", "C", "W"}).lan("OUT", {"P", "S", "O"});
  return s;
}

}  // namespace topo

}  // namespace netsec::firewall
