#include "netsec/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "netsec/attacks.hpp"
#include "netsec/error.hpp"
#include "netsec/firewall.hpp"
#include "netsec/handshakes.hpp"
#include "netsec/secmail.hpp"
#include "netsec/stack.hpp"

namespace netsec::scenario {

using simnet::Action;
using simnet::Layer;
using simnet::TopologySpec;
using stack::ConnKey;
using stack::Internetwork;

namespace {

[[noreturn]] void fail(Errc code, int line, const std::string& msg) {
  throw Error(code, "line " + std::to_string(line) + ": " + msg);
}

// Whitespace split with double quotes; \n, \t, \" and \\ escapes inside quotes.
std::vector<std::string> split_words(const std::string& text, int line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_word = false, quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        quoted = false;
      } else if (c == '\\' && i + 1 < text.size()) {
        const char n = text[++i];
        cur += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = in_word = true;
    } else if (c == ' ' || c == '\t') {
      if (in_word) out.push_back(std::move(cur));
      cur.clear();
      in_word = false;
    } else {
      cur += c;
      in_word = true;
    }
  }
  if (quoted) fail(Errc::SyntaxError, line, "unterminated quote");
  if (in_word) out.push_back(std::move(cur));
  return out;
}

std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<std::int64_t> as_int(const std::string& s) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || p != end) return std::nullopt;
  return v;
}

std::uint64_t parse_u64(const std::string& s, int line, const std::string& what) {
  const auto v = as_int(s);
  if (!v || *v < 0) fail(Errc::SyntaxError, line, what + " must be a non-negative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(*v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool parse_switch(const std::string& s, int line) {
  if (s == "on" || s == "1" || s == "true") return true;
  if (s == "off" || s == "0" || s == "false") return false;
  fail(Errc::SyntaxError, line, "expected on|off, got '" + s + "'");
}

std::set<std::string> node_set(const TopologySpec& t) {
  std::set<std::string> out;
  for (const auto& n : t.nodes) out.insert(n.name);
  return out;
}

void append(TopologySpec& into, const TopologySpec& from) {
  into.nodes.insert(into.nodes.end(), from.nodes.begin(), from.nodes.end());
  into.links.insert(into.links.end(), from.links.begin(), from.links.end());
}

// ---------------------------------------------------------------------------
// Actions

using Args = std::map<std::string, std::string>;
using Metrics = std::map<std::string, std::string>;

struct Runtime;
using Handler = std::function<void(Runtime&, const Step&, Metrics&)>;

struct ActionSpec {
  std::vector<std::string> required;
  std::vector<std::string> optional;
  std::vector<std::string> nodes;       // args naming one node
  std::vector<std::string> node_lists;  // args naming comma-separated nodes
  std::vector<std::string> metrics;
  Handler run;
};

const std::map<std::string, ActionSpec>& registry();

struct Runtime {
  const Scenario& s;
  Internetwork inet;
  std::vector<std::unique_ptr<firewall::SiteFirewall>> firewalls;
  std::map<std::string, firewall::FirewallConfig> fw_configs;
  std::map<std::string, std::pair<std::string, ConnKey>> conns;
  std::map<std::string, std::size_t> starts;
  std::map<std::string, symcrypto::Key> tunnel_keys;

  explicit Runtime(const Scenario& sc) : s(sc), inet(sc.topology, sc.seed, sc.max_events) {}

  std::string run() { return inet.run(); }
  std::size_t mark() const { return inet.net().trace().size(); }
};

const std::string& arg(const Step& st, const std::string& key) {
  return st.args.at(key);
}

std::string arg_or(const Step& st, const std::string& key, const std::string& fallback) {
  auto it = st.args.find(key);
  return it == st.args.end() ? fallback : it->second;
}

std::uint64_t num(const Step& st, const std::string& key, std::uint64_t fallback) {
  auto it = st.args.find(key);
  return it == st.args.end() ? fallback : parse_u64(it->second, st.line, key);
}

bool flag(const Step& st, const std::string& key, bool fallback) {
  auto it = st.args.find(key);
  return it == st.args.end() ? fallback : parse_switch(it->second, st.line);
}

std::string b(bool v) { return v ? "1" : "0"; }

IpAddr ip_arg(Runtime& rt, const std::string& v) {
  if (rt.inet.net().has_node(v)) return rt.inet.primary_ip(v);
  return IpAddr::parse(v);
}

void put_report(const attacks::AttackReport& r, Metrics& m) {
  for (const auto& [k, v] : r.metrics) m[k] = std::to_string(v);
  m["success"] = b(r.success);
}

attacks::Traffic udp_traffic(const Step& st, int default_frames) {
  if (!st.args.count("from")) return nullptr;
  const auto from = arg(st, "from");
  const auto to = arg(st, "to");
  const auto frames = num(st, "frames", default_frames);
  return [=](Internetwork& inet) {
    inet.bind_app(to, 4000);
    for (std::uint64_t i = 0; i < frames; ++i) inet.send_udp(from, inet.primary_ip(to), 4000, 4000, Term::plain("f"));
  };
}

const std::pair<std::string, ConnKey>& conn_of(Runtime& rt, const Step& st) {
  auto it = rt.conns.find(arg(st, "conn"));
  if (it == rt.conns.end()) throw Error(Errc::NotEstablished, "no connection labelled " + arg(st, "conn"));
  return it->second;
}

IpAddr address_facing(Runtime& rt, const std::string& node, const std::string& peer) {
  const auto peer_ip = rt.inet.primary_ip(peer);
  for (const auto& a : rt.inet.net().node(node).addrs) {
    if (a.prefix().contains(peer_ip)) return a.ip;
  }
  return rt.inet.primary_ip(node);
}

Layer layer_from(const std::string& s) {
  if (s == "link") return Layer::Link;
  if (s == "internet") return Layer::Internet;
  if (s == "transport") return Layer::Transport;
  if (s == "application") return Layer::Application;
  throw Error(Errc::InvalidArgument, "unknown layer " + s);
}

Action event_from(const std::string& s) {
  if (s == "SEND") return Action::Send;
  if (s == "RECV") return Action::Recv;
  if (s == "DROP") return Action::Drop;
  if (s == "NOTE") return Action::Note;
  throw Error(Errc::InvalidArgument, "unknown event " + s);
}

void do_ssh(Runtime& rt, const Step& st, Metrics& m) {
  auto& keys = rt.inet.keys();
  const auto client = arg(st, "client");
  const auto server = arg(st, "server");
  handshakes::SshServer srv;
  srv.name = server;
  srv.host_keys = keys.keygen_pair(server);
  handshakes::SshClient cl;
  cl.name = client;
  cl.host_keys = keys.keygen_pair(client);
  cl.accept_unknown = flag(st, "accept_unknown", false);
  if (flag(st, "pinned", true)) cl.store.remember_host(server, srv.host_keys.pub);
  // the machine answering now is not the one the client pinned
  if (flag(st, "impostor", false)) srv.host_keys = keys.keygen_pair(server);
  if (flag(st, "reverse", false)) srv.known_clients[client] = cl.host_keys.pub;
  for (const auto& item : split_list(arg_or(st, "offer", "aes256-ctr:3,aes128-ctr:2,3des-cbc:1"))) {
    const auto colon = item.find(':');
    const auto rank = colon == std::string::npos ? 0 : parse_u64(item.substr(colon + 1), st.line, "rank");
    cl.offered.push_back({item.substr(0, colon), static_cast<int>(rank)});
  }
  for (const auto& a : split_list(arg_or(st, "support", "aes256-ctr,aes128-ctr,3des-cbc"))) srv.supported.insert(a);
  const auto user = arg_or(st, "user", "alice");
  const auto password = arg_or(st, "password", "hunter2");
  srv.add_user(user, password);
  cl.username = user;
  cl.password = arg_or(st, "typed", password);

  stack::NetChannel ch(rt.inet);
  const auto session = handshakes::ssh_connect(cl, srv, ch, keys);
  m["phase"] = std::string(handshakes::to_string(session.phase));
  m["algorithm"] = session.chosen_alg;
  m["peer_verified"] = b(session.peer_verified);
  m["client_verified"] = b(session.client_verified);
}

void do_tls(Runtime& rt, const Step& st, Metrics& m) {
  auto& keys = rt.inet.keys();
  handshakes::TlsEndpoint c, s;
  c.name = arg(st, "client");
  s.name = arg(st, "server");
  c.min_version = static_cast<int>(num(st, "client_min", 10));
  c.max_version = static_cast<int>(num(st, "client_max", 12));
  s.min_version = static_cast<int>(num(st, "server_min", 10));
  s.max_version = static_cast<int>(num(st, "server_max", 12));
  c.suites = split_list(arg_or(st, "client_suites", "ECDHE-AES256-GCM,ECDHE-AES128-GCM,RSA-3DES"));
  s.suites = split_list(arg_or(st, "server_suites", "ECDHE-AES128-GCM,RSA-3DES"));
  c.keys = keys.keygen_pair(c.name);
  s.keys = keys.keygen_pair(s.name);
  const bool forged = flag(st, "forge", false);
  s.cert = symcrypto::cert_issue(forged ? "Rogue-CA" : "Web-CA", s.name, s.keys.pub);
  c.cert = symcrypto::cert_issue("Web-CA", c.name, c.keys.pub);
  c.store.trusted_issuers = {"Web-CA"};
  s.store.trusted_issuers = {"Web-CA"};
  const bool mutual = flag(st, "mutual", false);

  stack::NetChannel ch(rt.inet);
  const auto session = handshakes::tls_handshake(c, s, ch, keys, mutual);
  m["version"] = std::to_string(session.version);
  m["suite"] = session.cipher_suite;
  m["finished"] = b(session.finished_ok.first && session.finished_ok.second);
  m["mutual"] = b(session.mutual);
}

void do_kerberos(Runtime& rt, const Step& st, Metrics& m) {
  auto& keys = rt.inet.keys();
  const auto kdc_node = arg(st, "kdc");
  const auto user = arg_or(st, "user", "alice");
  const auto password = arg_or(st, "password", "hunter2");
  const handshakes::ClockPolicy clock{num(st, "skew", handshakes::kDefaultSkew)};

  handshakes::Kdc kdc;
  kdc.as_name = kdc.tgs_name = kdc_node;
  kdc.tgs_secret = keys.keygen_symmetric(kdc_node);
  kdc.validity = num(st, "validity", handshakes::kDefaultValidity);
  kdc.clock = clock;
  kdc.keys = symcrypto::KeyFactory(rt.s.seed);
  kdc.add_user(user, password);
  std::vector<handshakes::ServiceServer> servers;
  for (const auto& svc : split_list(arg(st, "services"))) {
    const auto secret = keys.keygen_symmetric(svc);
    kdc.services[svc] = secret;
    servers.push_back({svc, secret, clock});
  }
  handshakes::KrbClient c;
  c.node = arg(st, "client");
  c.username = user;
  c.addr = rt.inet.primary_ip(c.node);
  c.password = arg_or(st, "typed", password);

  stack::NetChannel ch(rt.inet);
  const auto before = rt.mark();
  int ok = 0;
  auto finish = [&] {
    m["tickets"] = std::to_string(c.grants.size());
    m["services_ok"] = std::to_string(ok);
    m["password_uses"] = std::to_string(c.password_uses);
    std::size_t leaks = 0;
    const auto& trace = rt.inet.net().trace();
    for (std::size_t i = before; i < trace.size(); ++i) leaks += trace[i].line().find(password) != std::string::npos;
    m["password_leaks"] = std::to_string(leaks);
  };
  try {
    handshakes::krb_as_exchange(c, kdc, ch);
    for (auto& ss : servers) {
      handshakes::krb_tgs_exchange(c, kdc, ss.name, ch);
      handshakes::krb_ss_exchange(c, ss, ch);
      ++ok;
    }
  } catch (const Error&) {
    finish();
    throw;
  }
  finish();
}

void do_mail(Runtime& rt, const Step& st, Metrics& m) {
  auto& keys = rt.inet.keys();
  const auto from = arg(st, "from");
  const auto to = arg(st, "to");
  const auto header = arg_or(st, "header", "To: " + to);
  const auto body = arg_or(st, "body", "meet at noon");
  secmail::MailParty sender{from, keys.keygen_pair(from), {}};
  sender.cert = symcrypto::cert_issue(flag(st, "trusted", true) ? "Mail-CA" : "Dodgy-CA", from, sender.keys.pub);
  const auto receiver = keys.keygen_pair(to);
  symcrypto::TrustStore store;
  store.trusted_issuers = {"Mail-CA"};
  const auto scheme = arg_or(st, "scheme", "smime");
  if (scheme != "pgp" && scheme != "smime") throw Error(Errc::InvalidArgument, "unknown scheme " + scheme);

  const auto env = scheme == "pgp" ? secmail::pgp_seal(sender, receiver.pub, header, body)
                                   : secmail::smime_seal(sender, receiver.pub, header, body, keys);
  stack::NetChannel ch(rt.inet);
  const auto got = ch.deliver(from, to, "mail", env.to_term());
  m["delivered"] = b(got.has_value());
  if (!got) return;
  const auto rx = secmail::MailEnvelope::from_term(*got);
  if (scheme == "pgp") {
    const auto o = secmail::pgp_open(receiver.prv, store, rx);
    m["body_ok"] = b(o.body == body);
    m["authentic"] = b(o.non_repudiation_ok);
  } else {
    const auto o = secmail::smime_open(receiver.prv, store, rx);
    m["body_ok"] = b(o.body == body);
    m["authentic"] = b(o.integrity_ok && o.sender_ok);
  }
}

void do_exposure(Runtime& rt, const Step& st, Metrics& m) {
  const auto path = split_list(arg(st, "path"));
  const auto mode_name = arg(st, "mode");
  secmail::ProtectionMode mode;
  if (mode_name == "link") {
    mode = secmail::ProtectionMode::Link;
  } else if (mode_name == "e2e") {
    mode = secmail::ProtectionMode::EndToEnd;
  } else {
    throw Error(Errc::InvalidArgument, "mode must be link or e2e");
  }
  const auto sim = secmail::simulate_exposure(path, mode, arg_or(st, "header", "Subject: q3"),
                                              arg_or(st, "body", "the merger is off"), rt.s.seed);
  int plain = 0, inner = 0;
  for (const auto& e : sim.report.exposure) {
    plain += e.plaintext;
    if (e.plaintext && e.node != path.front() && e.node != path.back()) ++inner;
  }
  for (const auto& line : sim.report.render()) rt.inet.emit("exposure", Action::Note, Layer::Application, line);
  m["plaintext_entries"] = std::to_string(plain);
  m["intermediate_plaintext"] = std::to_string(inner);
  m["wire_sends"] = std::to_string(sim.wire_sends);
  m["wire_plaintext_sends"] = std::to_string(sim.wire_plaintext_sends);
  m["delivered"] = b(sim.delivered);
  m["matches_analysis"] = b(sim.report.exposure == secmail::exposure_report(path, mode).exposure);
}

void do_proxy(Runtime& rt, const Step& st, Metrics& m) {
  firewall::ProxyBinding pb;
  pb.proxy = arg(st, "proxy");
  pb.server = arg(st, "server");
  const auto client = arg(st, "client");
  pb.service = arg_or(st, "service", "http");
  pb.port = static_cast<std::uint16_t>(num(st, "port", 80));
  pb.near_ip = st.args.count("near") ? IpAddr::parse(arg(st, "near")) : address_facing(rt, pb.proxy, client);
  pb.far_ip = st.args.count("far") ? IpAddr::parse(arg(st, "far")) : address_facing(rt, pb.proxy, pb.server);
  if (st.args.count("firewall")) {
    auto it = rt.fw_configs.find(arg(st, "firewall"));
    if (it == rt.fw_configs.end()) throw Error(Errc::InvalidArgument, "no firewall " + arg(st, "firewall"));
    pb.rules = it->second.content;
  }
  const auto response = arg_or(st, "response", "200 OK");
  const auto r = firewall::proxy_relay(rt.inet, pb, client, Term::plain(arg(st, "request")),
                                       [&](const Term&) { return Term::plain(response); });
  m["relayed"] = "1";
  m["server_saw_proxy"] = b(r.server_saw == pb.far_ip);
  m["server_saw_client"] = b(r.server_saw == rt.inet.primary_ip(client));
}

const std::map<std::string, ActionSpec>& registry() {
  static const std::map<std::string, ActionSpec> r = [] {
    std::map<std::string, ActionSpec> a;
    a["run"] = {{}, {}, {}, {}, {"end"}, [](Runtime& rt, const Step&, Metrics& m) { m["end"] = rt.run(); }};
    a["converge"] = {{}, {}, {}, {}, {"rounds"}, [](Runtime& rt, const Step&, Metrics& m) {
                       m["rounds"] = std::to_string(rt.inet.converge());
                     }};
    a["listen"] = {{"node", "port"}, {}, {"node"}, {}, {}, [](Runtime& rt, const Step& st, Metrics&) {
                     rt.inet.tcp_listen(arg(st, "node"), static_cast<std::uint16_t>(num(st, "port", 0)));
                   }};
    a["connect"] = {{"from", "to", "port"}, {"sport"}, {"from", "to"}, {}, {"established"},
                    [](Runtime& rt, const Step& st, Metrics& m) {
                      const auto from = arg(st, "from");
                      const auto key =
                          rt.inet.tcp_open(from, rt.inet.primary_ip(arg(st, "to")),
                                           static_cast<std::uint16_t>(num(st, "port", 0)),
                                           static_cast<std::uint16_t>(num(st, "sport", 0)));
                      rt.conns[st.label] = {from, key};
                      rt.run();
                      const auto* c = rt.inet.conn(from, key);
                      m["established"] = b(c && c->state == stack::TcpState::Established);
                    }};
    a["send"] = {{"conn", "data"}, {}, {}, {}, {"received_bytes", "delivered"},
                 [](Runtime& rt, const Step& st, Metrics& m) {
                   const auto [node, key] = conn_of(rt, st);
                   const ConnKey server_view{key.remote_ip, key.remote_port, key.local_ip, key.local_port};
                   const auto peer = rt.inet.owner_of(key.remote_ip);
                   auto received = [&] {
                     const auto* c = peer ? rt.inet.conn(*peer, server_view) : nullptr;
                     return c ? c->received : std::string();
                   };
                   const auto before = received().size();
                   rt.inet.tcp_send(node, key, arg(st, "data"));
                   rt.run();
                   const auto after = received();
                   m["received_bytes"] = std::to_string(after.size());
                   m["delivered"] = b(after.size() > before && after.substr(before).find(arg(st, "data")) != std::string::npos);
                 }};
    a["close"] = {{"conn"}, {}, {}, {}, {}, [](Runtime& rt, const Step& st, Metrics&) {
                    const auto [node, key] = conn_of(rt, st);
                    rt.inet.tcp_close(node, key);
                    rt.run();
                  }};
    a["ping"] = {{"from", "to"}, {"src"}, {"from", "to"}, {}, {"replies"},
                 [](Runtime& rt, const Step& st, Metrics& m) {
                   const auto from = arg(st, "from");
                   std::optional<IpAddr> src;
                   if (st.args.count("src")) src = ip_arg(rt, arg(st, "src"));
                   const auto start = rt.mark();
                   rt.inet.send_icmp_echo(from, rt.inet.primary_ip(arg(st, "to")), 1, 1, src);
                   rt.run();
                   m["replies"] = std::to_string(simnet::count_events(
                       rt.inet.net().trace(), {from, Action::Recv, Layer::Internet, "echo-reply", start}));
                 }};
    a["udp"] = {{"from", "to"}, {"port", "data", "count", "src"}, {"from", "to"}, {}, {"delivered"},
                [](Runtime& rt, const Step& st, Metrics& m) {
                  const auto to = arg(st, "to");
                  const auto port = static_cast<std::uint16_t>(num(st, "port", 4000));
                  std::optional<IpAddr> src;
                  if (st.args.count("src")) src = ip_arg(rt, arg(st, "src"));
                  rt.inet.bind_app(to, port);
                  const auto before = rt.inet.inbox(to, port).size();
                  for (std::uint64_t i = 0, n = num(st, "count", 1); i < n; ++i) {
                    rt.inet.send_udp(arg(st, "from"), rt.inet.primary_ip(to), port, port,
                                     Term::plain(arg_or(st, "data", "x")), src);
                  }
                  rt.run();
                  m["delivered"] = std::to_string(rt.inet.inbox(to, port).size() - before);
                }};
    a["tap"] = {{"observer"}, {"a", "b", "domain"}, {"observer", "a", "b"}, {}, {},
                [](Runtime& rt, const Step& st, Metrics&) {
                  auto& net = rt.inet.net();
                  if (st.args.count("domain")) {
                    const auto seg = net.find_domain(arg(st, "domain"));
                    if (!seg) throw Error(Errc::UnknownDomain, arg(st, "domain"));
                    net.attach_segment_tap(*seg, arg(st, "observer"));
                  } else {
                    net.attach_tap(arg_or(st, "a", ""), arg_or(st, "b", ""), arg(st, "observer"));
                  }
                }};
    a["count"] = {{}, {"node", "event", "layer", "contains", "since"}, {"node"}, {}, {"events"},
                  [](Runtime& rt, const Step& st, Metrics& m) {
                    simnet::TraceFilter f;
                    if (st.args.count("node")) f.node = arg(st, "node");
                    if (st.args.count("event")) f.action = event_from(arg(st, "event"));
                    if (st.args.count("layer")) f.layer = layer_from(arg(st, "layer"));
                    f.contains = arg_or(st, "contains", "");
                    if (st.args.count("since")) f.from_index = rt.starts.at(arg(st, "since"));
                    m["events"] = std::to_string(simnet::count_events(rt.inet.net().trace(), f));
                  }};

    // attacks
    a["wiretap"] = {{"a", "b", "observer"}, {"from", "to", "frames"}, {"a", "b", "observer", "from", "to"}, {},
                    {"frames_captured", "success"}, [](Runtime& rt, const Step& st, Metrics& m) {
                      put_report(attacks::wiretap_capture(rt.inet, arg(st, "a"), arg(st, "b"), arg(st, "observer"),
                                                          udp_traffic(st, 5)),
                                 m);
                    }};
    a["nic_clone"] = {{"intruder", "victim"}, {"reinject", "from", "frames"}, {"intruder", "victim", "from"}, {},
                      {"frames_stolen", "frames_reinjected", "victim_received", "success"},
                      [](Runtime& rt, const Step& st, Metrics& m) {
                        Step traffic = st;
                        traffic.args["to"] = arg(st, "victim");
                        put_report(attacks::reprogram_nic(rt.inet, arg(st, "intruder"), arg(st, "victim"),
                                                          flag(st, "reinject", false), udp_traffic(traffic, 3)),
                                   m);
                      }};
    a["hijack"] = {{"attacker", "conn", "payload"}, {"threshold"}, {"attacker"}, {},
                   {"predicted_seq", "injected", "storm_acks", "client_closed", "success"},
                   [](Runtime& rt, const Step& st, Metrics& m) {
                     const auto [node, key] = conn_of(rt, st);
                     put_report(attacks::hijack_session(rt.inet, arg(st, "attacker"), {node, key}, arg(st, "payload"),
                                                        static_cast<int>(num(st, "threshold", 5))),
                                m);
                   }};
    a["mitm"] = {{"attacker", "a", "b", "message"}, {"rewrite", "verify"}, {"attacker", "a", "b"}, {},
                 {"intercepted", "tampered", "detected", "success"}, [](Runtime& rt, const Step& st, Metrics& m) {
                   std::optional<std::string> rewrite;
                   if (st.args.count("rewrite")) rewrite = arg(st, "rewrite");
                   put_report(attacks::mitm_pubkey(rt.inet, arg(st, "attacker"), arg(st, "a"), arg(st, "b"),
                                                   arg(st, "message"), rewrite, flag(st, "verify", false)),
                              m);
                 }};
    a["echo_chargen"] = {{"attacker", "a", "b"}, {"budget"}, {"attacker", "a", "b"}, {},
                         {"messages_exchanged", "max_len", "min_len", "chargen_replies", "hit_budget", "success"},
                         [](Runtime& rt, const Step& st, Metrics& m) {
                           std::optional<std::uint64_t> budget;
                           if (st.args.count("budget")) budget = num(st, "budget", 0);
                           put_report(attacks::echo_chargen(rt.inet, arg(st, "attacker"), arg(st, "a"), arg(st, "b"),
                                                            budget),
                                      m);
                         }};
    a["smurf"] = {{"attacker", "victim", "domain"}, {}, {"attacker", "victim"}, {},
                  {"replies_to_victim", "replies_sent", "success"}, [](Runtime& rt, const Step& st, Metrics& m) {
                    put_report(attacks::smurf(rt.inet, arg(st, "attacker"), rt.inet.primary_ip(arg(st, "victim")),
                                              arg(st, "domain")),
                               m);
                  }};
    a["redirect"] = {{"router", "from", "to"}, {"rounds"}, {"router", "from"}, {"to"},
                     {"baseline_delivered", "routes_captured", "delivered", "packets_blackholed", "success"},
                     [](Runtime& rt, const Step& st, Metrics& m) {
                       const auto targets = split_list(arg(st, "to"));
                       std::vector<attacks::Probe> probes;
                       for (std::uint64_t i = 0, n = num(st, "rounds", targets.size()); i < n; ++i) {
                         probes.push_back({arg(st, "from"), targets[i % targets.size()]});
                       }
                       put_report(attacks::redirect_blackhole(rt.inet, arg(st, "router"), probes), m);
                     }};
    a["dns_poison"] = {{"attacker", "server", "name", "bogus", "clients"}, {"ttl"}, {"attacker", "server"},
                       {"clients"}, {"poisoned_answers", "recovered", "success"},
                       [](Runtime& rt, const Step& st, Metrics& m) {
                         put_report(attacks::dns_poison(rt.inet, arg(st, "attacker"), arg(st, "server"), arg(st, "name"),
                                                        IpAddr::parse(arg(st, "bogus")), num(st, "ttl", 50),
                                                        split_list(arg(st, "clients"))),
                                    m);
                       }};
    a["syn_flood"] = {{"attacker", "server", "count", "genuine"}, {"port", "pool"}, {"attacker", "server", "genuine"},
                      {}, {"admitted", "discarded", "genuine_rejected", "genuine_recovered", "peak_queue", "success"},
                      [](Runtime& rt, const Step& st, Metrics& m) {
                        const auto count = num(st, "count", 0);
                        const auto pool = attacks::unused_addresses(rt.inet, num(st, "pool", std::max<std::uint64_t>(count, 16)));
                        put_report(attacks::syn_flood(rt.inet, arg(st, "attacker"), arg(st, "server"),
                                                      static_cast<std::uint16_t>(num(st, "port", 80)),
                                                      static_cast<int>(count), pool, arg(st, "genuine")),
                                   m);
                      }};
    a["ddos"] = {{"attacker", "zombies", "victim", "genuine"}, {"port", "per"}, {"attacker", "victim", "genuine"},
                 {"zombies"},
                 {"zombies", "signalled", "syns_received", "victim_saturated", "victim_recovered", "success"},
                 [](Runtime& rt, const Step& st, Metrics& m) {
                   put_report(attacks::ddos_campaign(rt.inet, arg(st, "attacker"), split_list(arg(st, "zombies")),
                                                     arg(st, "victim"), static_cast<std::uint16_t>(num(st, "port", 80)),
                                                     static_cast<int>(num(st, "per", 3)), arg(st, "genuine")),
                              m);
                 }};
    a["tamper"] = {{"node", "nth"}, {}, {"node"}, {}, {}, [](Runtime& rt, const Step& st, Metrics&) {
                     attacks::tamper_in_flight(rt.inet, arg(st, "node"), num(st, "nth", 0));
                   }};

    // controls
    a["secure"] = {{"sender", "receiver"}, {"proto"}, {"sender", "receiver"}, {}, {},
                   [](Runtime& rt, const Step& st, Metrics&) {
                     const auto p = arg_or(st, "proto", "ah");
                     if (p != "ah" && p != "esp") throw Error(Errc::InvalidArgument, "proto must be ah or esp");
                     stack::NetChannel ch(rt.inet);
                     stack::secure_flow(rt.inet, arg(st, "sender"), arg(st, "receiver"),
                                        p == "ah" ? ipsec::Protocol::AH : ipsec::Protocol::ESP, ch);
                   }};
    a["ssh"] = {{"client", "server"},
                {"user", "password", "typed", "pinned", "accept_unknown", "impostor", "reverse", "offer", "support"},
                {"client", "server"},
                {},
                {"phase", "algorithm", "peer_verified", "client_verified"},
                do_ssh};
    a["tls"] = {{"client", "server"},
                {"mutual", "client_min", "client_max", "server_min", "server_max", "client_suites", "server_suites",
                 "forge"},
                {"client", "server"},
                {},
                {"version", "suite", "finished", "mutual"},
                do_tls};
    a["kerberos"] = {{"client", "kdc", "services"},
                     {"user", "password", "typed", "skew", "validity"},
                     {"client", "kdc"},
                     {"services"},
                     {"tickets", "services_ok", "password_uses", "password_leaks"},
                     do_kerberos};
    a["mail"] = {{"from", "to"}, {"scheme", "header", "body", "trusted"}, {"from", "to"}, {},
                 {"delivered", "body_ok", "authentic"}, do_mail};
    a["exposure"] = {{"path", "mode"},
                     {"header", "body"},
                     {},
                     {},
                     {"plaintext_entries", "intermediate_plaintext", "wire_sends", "wire_plaintext_sends", "delivered",
                      "matches_analysis"},
                     do_exposure};
    a["key_count"] = {{"mode", "n"}, {}, {}, {}, {"keys"}, [](Runtime&, const Step& st, Metrics& m) {
                        m["keys"] = std::to_string(secmail::key_count(secmail::key_mode_from(arg(st, "mode")),
                                                                      num(st, "n", 0)));
                      }};
    a["proxy"] = {{"proxy", "client", "server", "request"},
                  {"service", "port", "near", "far", "firewall", "response"},
                  {"proxy", "client", "server"},
                  {},
                  {"relayed", "server_saw_proxy", "server_saw_client"},
                  do_proxy};
    return a;
  }();
  return r;
}

// ---------------------------------------------------------------------------
// Policy

using PolicyFlag = bool stack::NodePolicy::*;
const std::map<std::string, PolicyFlag>& policy_flags() {
  static const std::map<std::string, PolicyFlag> f{
      {"directed_broadcast", &stack::NodePolicy::directed_broadcast},
      {"broadcast_echo", &stack::NodePolicy::broadcast_echo},
      {"icmp_echo", &stack::NodePolicy::icmp_echo},
      {"public_region", &stack::NodePolicy::public_region},
      {"blackhole", &stack::NodePolicy::blackhole},
      {"compromised", &stack::NodePolicy::compromised},
      {"modem_bypass", &stack::NodePolicy::modem_bypass},
      {"advertise_zero", &stack::NodePolicy::advertise_zero},
  };
  return f;
}

Args keyed(const std::vector<std::string>& words, std::size_t from, int line) {
  Args out;
  for (std::size_t i = from; i < words.size(); ++i) {
    const auto eq = words[i].find('=');
    if (eq == std::string::npos || eq == 0) fail(Errc::SyntaxError, line, "expected key=value, got '" + words[i] + "'");
    out[words[i].substr(0, eq)] = words[i].substr(eq + 1);
  }
  return out;
}

void check_keys(const Args& args, const std::set<std::string>& allowed, int line) {
  for (const auto& [k, v] : args) {
    if (!allowed.count(k)) fail(Errc::SyntaxError, line, "unexpected argument '" + k + "'");
  }
}

void need_node(const std::set<std::string>& nodes, const std::string& n, int line) {
  if (!nodes.count(n)) fail(Errc::UnknownNodeRef, line, "undeclared node '" + n + "'");
}

// Validates a policy line; with a runtime, applies it as well.
void policy_line(const PolicyLine& p, const std::set<std::string>& nodes, Runtime* rt) {
  const auto& w = p.words;
  const int line = p.line;
  auto need = [&](std::size_t n) {
    if (w.size() < n) fail(Errc::SyntaxError, line, "too few words for '" + w[0] + "'");
  };
  need(2);
  const auto& kw = w[0];
  if (kw == "service") {
    need(4);
    need_node(nodes, w[1], line);
    if (w[2] != "echo" && w[2] != "chargen") fail(Errc::SyntaxError, line, "service must be echo or chargen");
    const bool on = parse_switch(w[3], line);
    if (rt) rt->inet.enable_service(w[1], w[2] == "echo" ? stack::kEchoPort : stack::kChargenPort, on);
  } else if (kw == "synq") {
    need_node(nodes, w[1], line);
    const auto a = keyed(w, 2, line);
    check_keys(a, {"capacity", "timeout"}, line);
    std::optional<std::uint64_t> cap, timeout;
    if (a.count("capacity")) cap = parse_u64(a.at("capacity"), line, "capacity");
    if (a.count("timeout")) timeout = parse_u64(a.at("timeout"), line, "timeout");
    if (rt) {
      auto& q = rt->inet.host(w[1]).synq;
      if (cap) q.capacity = *cap;
      if (timeout) q.timeout = *timeout;
    }
  } else if (kw == "storm") {
    need(3);
    need_node(nodes, w[1], line);
    const auto n = parse_u64(w[2], line, "storm threshold");
    if (rt) rt->inet.host(w[1]).storm_threshold = static_cast<int>(n);
  } else if (kw == "dns") {
    need_node(nodes, w[1], line);
    const auto a = keyed(w, 2, line);
    check_keys(a, {"ttl", "upstream"}, line);
    if (a.count("upstream")) need_node(nodes, a.at("upstream"), line);
    std::optional<std::uint64_t> ttl;
    if (a.count("ttl")) ttl = parse_u64(a.at("ttl"), line, "ttl");
    if (rt) {
      auto& d = rt->inet.dns_server(w[1]);
      if (ttl) d.ttl = *ttl;
      if (a.count("upstream")) d.upstream = rt->inet.primary_ip(a.at("upstream"));
    }
  } else if (kw == "record") {
    need(4);
    need_node(nodes, w[1], line);
    const auto addr = IpAddr::parse(w[3]);
    if (rt) rt->inet.dns_server(w[1]).authoritative[w[2]] = addr;
  } else if (kw == "tunnel") {
    need_node(nodes, w[1], line);
    const auto a = keyed(w, 2, line);
    check_keys(a, {"name", "local", "peer", "remote", "public_inner"}, line);
    for (const char* k : {"name", "local", "peer", "remote"}) {
      if (!a.count(k)) fail(Errc::SyntaxError, line, std::string("tunnel needs ") + k + "=");
    }
    ipsec::Tunnel t;
    t.name = a.at("name");
    t.local_public = IpAddr::parse(a.at("local"));
    t.peer_public = IpAddr::parse(a.at("peer"));
    t.remote_private = Prefix::parse(a.at("remote"));
    t.allow_public_inner = a.count("public_inner") && parse_switch(a.at("public_inner"), line);
    if (rt) {
      auto it = rt->tunnel_keys.find(t.name);
      if (it == rt->tunnel_keys.end()) {
        it = rt->tunnel_keys.emplace(t.name, rt->inet.keys().keygen_symmetric("vpn:" + t.name)).first;
      }
      t.key = it->second;
      rt->inet.host(w[1]).tunnels.push_back(t);
    }
  } else {
    need(3);
    need_node(nodes, w[0], line);
    auto f = policy_flags().find(w[1]);
    if (f == policy_flags().end()) fail(Errc::SyntaxError, line, "unknown policy flag '" + w[1] + "'");
    const bool on = parse_switch(w[2], line);
    if (rt) rt->inet.policy(w[0]).*(f->second) = on;
  }
}

// ---------------------------------------------------------------------------
// Parsing

TopologySpec stock_topology(const std::vector<std::string>& w, int line) {
  const auto& name = w[1];
  auto count = [&](int fallback) {
    return w.size() > 2 ? static_cast<int>(parse_u64(w[2], line, "count")) : fallback;
  };
  if (name == "smurf") return attacks::topo::smurf(count(5));
  if (name == "lan_trio") {
    if (w.size() == 5) return attacks::topo::lan_trio(w[2], w[3], w[4]);
    if (w.size() != 2) fail(Errc::SyntaxError, line, "lan_trio takes zero or three names");
    return attacks::topo::lan_trio();
  }
  if (name == "mitm_line") return attacks::topo::mitm_line();
  if (name == "redirect") return attacks::topo::redirect();
  if (name == "dns") return attacks::topo::dns(count(3));
  if (name == "flood") return attacks::topo::flood(count(0));
  if (name == "site") return firewall::topo::site();
  if (name == "proxy") return firewall::topo::proxy();
  fail(Errc::SyntaxError, line, "unknown stock topology '" + name + "'");
}

void topology_line(TopologySpec& t, const std::vector<std::string>& w, int line) {
  const auto& kw = w[0];
  if (kw == "use") {
    if (w.size() < 2) fail(Errc::SyntaxError, line, "use needs a topology name");
    append(t, stock_topology(w, line));
  } else if (kw == "host" || kw == "router" || kw == "gateway") {
    if (w.size() < 2) fail(Errc::SyntaxError, line, kw + " needs a name");
    std::vector<std::string> addrs;
    std::optional<std::string> gw;
    for (std::size_t i = 2; i < w.size(); ++i) {
      if (w[i].rfind("gw=", 0) == 0) {
        gw = w[i].substr(3);
        continue;
      }
      try {
        const auto slash = w[i].find('/');
        IpAddr::parse(w[i].substr(0, slash));
        if (slash != std::string::npos) parse_u64(w[i].substr(slash + 1), line, "prefix length");
      } catch (const Error&) {
        fail(Errc::SyntaxError, line, "bad address '" + w[i] + "'");
      }
      addrs.push_back(w[i]);
    }
    if (kw == "host") {
      t.host(w[1], addrs, gw);
    } else {
      if (gw) fail(Errc::SyntaxError, line, "gw= applies to hosts only");
      kw == "router" ? t.router(w[1], addrs) : t.gateway(w[1], addrs);
    }
  } else if (kw == "link") {
    if (w.size() < 3) fail(Errc::SyntaxError, line, "link needs two endpoints");
    t.link(w[1], w[2]);
    for (std::size_t i = 3; i < w.size(); ++i) {
      if (w[i] == "fiber") {
        t.links.back().tappable = false;
      } else if (w[i] == "encrypted") {
        t.links.back().encrypted = true;
      } else {
        fail(Errc::SyntaxError, line, "unknown link option '" + w[i] + "'");
      }
    }
  } else if (kw == "lan") {
    if (w.size() < 4) fail(Errc::SyntaxError, line, "lan needs an id and at least two members");
    t.lan(w[1], std::vector<std::string>(w.begin() + 2, w.end()));
  } else {
    fail(Errc::SyntaxError, line, "unknown topology line '" + kw + "'");
  }
}

struct SectionHeader {
  std::string kind;
  std::vector<std::string> args;
};

}  // namespace

std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::Eq: return "==";
    case Comparator::Ne: return "!=";
    case Comparator::Lt: return "<";
    case Comparator::Le: return "<=";
    case Comparator::Gt: return ">";
    case Comparator::Ge: return ">=";
  }
  return "?";
}

std::string Assertion::text() const { return metric + " " + std::string(to_string(op)) + " " + value; }

std::vector<std::string> action_names() {
  std::vector<std::string> out;
  for (const auto& [name, spec] : registry()) out.push_back(name);
  return out;
}

Scenario parse_scenario(const std::string& text) {
  Scenario s;
  std::string section;
  FirewallSection* fw = nullptr;
  std::vector<std::pair<int, std::vector<std::string>>> topo_lines;
  std::vector<std::pair<int, std::vector<std::string>>> script_lines;
  std::vector<std::pair<int, std::vector<std::string>>> assert_lines;
  std::vector<int> node_lines, link_lines;

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto content = trim(strip_comment(raw));
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') fail(Errc::SyntaxError, line, "unterminated section header");
      const auto words = split_words(content.substr(1, content.size() - 2), line);
      if (words.empty()) fail(Errc::SyntaxError, line, "empty section header");
      section = words[0];
      fw = nullptr;
      if (section == "firewall") {
        if (words.size() < 2) fail(Errc::SyntaxError, line, "firewall section needs a name");
        const auto a = keyed(words, 2, line);
        check_keys(a, {"gateway"}, line);
        if (!a.count("gateway")) fail(Errc::SyntaxError, line, "firewall section needs gateway=");
        s.firewalls.push_back({line, words[1], a.at("gateway"), ""});
        fw = &s.firewalls.back();
      } else if (section != "scenario" && section != "topology" && section != "policy" && section != "script" &&
                 section != "assert") {
        fail(Errc::SyntaxError, line, "unknown section '" + section + "'");
      } else if (words.size() != 1) {
        fail(Errc::SyntaxError, line, "section '" + section + "' takes no arguments");
      }
      continue;
    }
    if (section.empty()) fail(Errc::SyntaxError, line, "content before the first section");
    if (fw) {
      fw->text += content + "\n";
      continue;
    }
    auto words = split_words(content, line);
    if (section == "scenario") {
      std::string key, value;
      const auto eq = content.find('=');
      if (eq != std::string::npos) {
        key = trim(content.substr(0, eq));
        value = trim(content.substr(eq + 1));
      } else if (words.size() == 2) {
        key = words[0];
        value = words[1];
      } else {
        fail(Errc::SyntaxError, line, "expected key = value");
      }
      if (key == "name") {
        s.name = value;
      } else if (key == "seed") {
        s.seed = parse_u64(value, line, "seed");
      } else if (key == "max_events") {
        s.max_events = parse_u64(value, line, "max_events");
      } else {
        fail(Errc::SyntaxError, line, "unknown scenario key '" + key + "'");
      }
    } else if (section == "topology") {
      topology_line(s.topology, words, line);
      node_lines.resize(s.topology.nodes.size(), line);
      link_lines.resize(s.topology.links.size(), line);
    } else if (section == "policy") {
      s.policy.push_back({line, words});
    } else if (section == "script") {
      script_lines.emplace_back(line, std::move(words));
    } else {
      assert_lines.emplace_back(line, std::move(words));
    }
  }

  // topology consistency
  const auto nodes = node_set(s.topology);
  {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < s.topology.nodes.size(); ++i) {
      const auto& n = s.topology.nodes[i];
      if (!seen.insert(n.name).second) fail(Errc::SyntaxError, node_lines[i], "node '" + n.name + "' declared twice");
      if (n.gateway && !nodes.count(*n.gateway)) {
        fail(Errc::UnknownNodeRef, node_lines[i], "gateway '" + *n.gateway + "' of " + n.name + " is not declared");
      }
    }
    for (std::size_t i = 0; i < s.topology.links.size(); ++i) {
      for (const auto* end : {&s.topology.links[i].a, &s.topology.links[i].b}) {
        if (!nodes.count(*end)) fail(Errc::UnknownNodeRef, link_lines[i], "undeclared node '" + *end + "'");
      }
    }
  }

  for (const auto& p : s.policy) policy_line(p, nodes, nullptr);
  for (const auto& f : s.firewalls) {
    need_node(nodes, f.gateway, f.line);
    try {
      const auto cfg = firewall::FirewallConfig::parse(f.name, f.text);
      for (const auto& [host, pol] : cfg.personal) need_node(nodes, host, f.line);
    } catch (const Error& e) {
      if (e.code() == Errc::UnknownNodeRef) throw;
      fail(Errc::SyntaxError, f.line, std::string("firewall ") + f.name + ": " + e.what());
    }
  }

  std::map<std::string, int> uses;
  std::map<std::string, std::string> label_action;
  std::uint64_t last_tick = 0;
  for (auto& [ln, w] : script_lines) {
    if (w.size() < 2) fail(Errc::SyntaxError, ln, "expected TICK ACTION [key=value...]");
    Step st;
    st.line = ln;
    st.tick = parse_u64(w[0], ln, "tick");
    if (st.tick < last_tick) fail(Errc::SyntaxError, ln, "ticks must not decrease");
    last_tick = st.tick;
    st.action = w[1];
    auto spec = registry().find(st.action);
    if (spec == registry().end()) fail(Errc::UnknownAction, ln, "unknown action '" + st.action + "'");
    st.args = keyed(w, 2, ln);
    std::set<std::string> allowed{"as"};
    for (const auto* list : {&spec->second.required, &spec->second.optional}) allowed.insert(list->begin(), list->end());
    check_keys(st.args, allowed, ln);
    for (const auto& k : spec->second.required) {
      if (!st.args.count(k)) fail(Errc::SyntaxError, ln, st.action + " needs " + k + "=");
    }
    for (const auto& k : spec->second.nodes) {
      if (st.args.count(k)) need_node(nodes, st.args.at(k), ln);
    }
    for (const auto& k : spec->second.node_lists) {
      if (!st.args.count(k)) continue;
      for (const auto& n : split_list(st.args.at(k))) need_node(nodes, n, ln);
    }
    for (const char* k : {"conn", "since"}) {
      if (st.args.count(k) && !label_action.count(st.args.at(k))) {
        fail(Errc::SyntaxError, ln, std::string(k) + "=" + st.args.at(k) + " names no earlier step");
      }
    }
    if (st.args.count("conn") && label_action.at(st.args.at("conn")) != "connect") {
      fail(Errc::SyntaxError, ln, "conn=" + st.args.at("conn") + " is not a connect step");
    }
    if (auto as = st.args.find("as"); as != st.args.end()) {
      st.label = as->second;
      st.args.erase(as);
      if (st.label.empty() || st.label == "scenario") {
        fail(Errc::SyntaxError, ln, "bad label '" + st.label + "'");
      }
    } else {
      const int n = ++uses[st.action];
      st.label = n == 1 ? st.action : st.action + "." + std::to_string(n);
    }
    if (!label_action.emplace(st.label, st.action).second) {
      fail(Errc::SyntaxError, ln, "label '" + st.label + "' used twice");
    }
    s.script.push_back(std::move(st));
  }

  for (auto& [ln, w] : assert_lines) {
    if (w.size() != 3) fail(Errc::SyntaxError, ln, "expected METRIC OP VALUE");
    Assertion a;
    a.line = ln;
    a.metric = w[0];
    a.value = w[2];
    static const std::map<std::string, Comparator> ops{{"==", Comparator::Eq}, {"!=", Comparator::Ne},
                                                       {"<", Comparator::Lt},  {"<=", Comparator::Le},
                                                       {">", Comparator::Gt},  {">=", Comparator::Ge}};
    auto op = ops.find(w[1]);
    if (op == ops.end()) fail(Errc::SyntaxError, ln, "unknown comparator '" + w[1] + "'");
    a.op = op->second;
    const auto dot = a.metric.rfind('.');
    if (dot == std::string::npos || dot == 0) fail(Errc::SyntaxError, ln, "metric must be LABEL.NAME");
    const auto label = a.metric.substr(0, dot);
    const auto name = a.metric.substr(dot + 1);
    if (label == "scenario") {
      if (name != "events" && name != "end") fail(Errc::SyntaxError, ln, "unknown metric '" + a.metric + "'");
    } else {
      auto it = label_action.find(label);
      if (it == label_action.end()) fail(Errc::SyntaxError, ln, "no step labelled '" + label + "'");
      const auto& metrics = registry().at(it->second).metrics;
      if (name != "ok" && name != "error" && std::find(metrics.begin(), metrics.end(), name) == metrics.end()) {
        fail(Errc::SyntaxError, ln, "step '" + label + "' reports no metric '" + name + "'");
      }
    }
    s.assertions.push_back(std::move(a));
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

bool compare(const std::string& actual, Comparator op, const std::string& expected) {
  const auto a = as_int(actual);
  const auto e = as_int(expected);
  auto apply = [op](const auto& x, const auto& y) {
    switch (op) {
      case Comparator::Eq: return x == y;
      case Comparator::Ne: return x != y;
      case Comparator::Lt: return x < y;
      case Comparator::Le: return x <= y;
      case Comparator::Gt: return x > y;
      case Comparator::Ge: return x >= y;
    }
    return false;
  };
  if (a && e) return apply(*a, *e);
  return apply(actual, expected);
}

}  // namespace

int exit_status(const std::vector<AssertionResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return 1;
  }
  return 0;
}

RunResult run_scenario(const Scenario& s) {
  RunResult out;
  auto rt = std::make_unique<Runtime>(s);
  const auto nodes = node_set(s.topology);
  for (const auto& p : s.policy) policy_line(p, nodes, rt.get());
  for (const auto& f : s.firewalls) {
    auto cfg = firewall::FirewallConfig::parse(f.name, f.text);
    rt->fw_configs[f.name] = cfg;
    rt->firewalls.push_back(std::make_unique<firewall::SiteFirewall>(std::move(cfg), f.gateway));
    rt->firewalls.back()->install(rt->inet);
  }

  if (!s.script.empty()) rt->inet.converge();
  for (const auto& st : s.script) {
    if (st.tick > rt->inet.now()) {
      rt->inet.net().schedule(st.tick, [] {});
      rt->run();
    }
    rt->starts[st.label] = rt->mark();
    Metrics m;
    try {
      registry().at(st.action).run(*rt, st, m);
      m["ok"] = "1";
      m["error"] = "none";
    } catch (const Error& e) {
      m["ok"] = "0";
      m["error"] = std::string(to_string(e.code()));
      rt->inet.emit("scenario", Action::Note, Layer::Application,
                    st.label + " error " + m["error"] + ": " + e.what());
    } catch (const std::exception& e) {
      m["ok"] = "0";
      m["error"] = "Unexpected";
      rt->inet.emit("scenario", Action::Note, Layer::Application, st.label + " error: " + e.what());
    }
    std::string report = st.label + ":";
    for (const auto& [k, v] : m) {
      out.metrics[st.label + "." + k] = v;
      report += " " + k + "=" + v;
    }
    out.reports.push_back(std::move(report));
  }
  out.metrics["scenario.events"] = std::to_string(rt->inet.net().trace().size());
  // how the most recent run of the scheduler ended, whoever started it
  std::string end = "idle";
  const auto& trace = rt->inet.net().trace();
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    if (it->node == "sim" && it->action == Action::Note && (it->detail == "idle" || it->detail == "budget")) {
      end = it->detail;
      break;
    }
  }
  out.metrics["scenario.end"] = end;

  for (const auto& a : s.assertions) {
    AssertionResult r{a, false, "<missing>"};
    if (auto it = out.metrics.find(a.metric); it != out.metrics.end()) {
      r.actual = it->second;
      r.passed = compare(r.actual, a.op, a.value);
    }
    out.assertions.push_back(std::move(r));
  }
  out.exit_status = exit_status(out.assertions);
  out.trace = rt->inet.net().trace();
  return out;
}

}  // namespace netsec::scenario
