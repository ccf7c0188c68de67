#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "netsec/error.hpp"
#include "netsec/firewall.hpp"

using namespace netsec;
using namespace netsec::firewall;
using netsec::stack::Internetwork;

namespace {

IpDatagram tcp(const char* src, std::uint16_t sp, const char* dst, std::uint16_t dp, std::uint8_t flags,
               std::string data = "") {
  IpDatagram d;
  d.src = IpAddr::parse(src);
  d.dst = IpAddr::parse(dst);
  d.protocol = proto::TCP;
  TcpSegment s;
  s.src_port = sp;
  s.dst_port = dp;
  s.flags = flags;
  s.data = std::move(data);
  d.payload = s;
  return d;
}

IpDatagram udp(const char* src, std::uint16_t sp, const char* dst, std::uint16_t dp, const std::string& text = "x") {
  IpDatagram d;
  d.src = IpAddr::parse(src);
  d.dst = IpAddr::parse(dst);
  d.protocol = proto::UDP;
  d.payload = UdpDatagram{sp, dp, Term::plain(text)};
  return d;
}

const char* kWeb = R"(default deny
protect 10.0.0.0/8
10 ingress allow tcp * * 10.0.0.0/8 80
)";

// open a connection through the stateful engine: SYN, SYN|ACK, ACK
void handshake(ConnState& st, const char* in, std::uint16_t sp, const char* out) {
  REQUIRE(stateful_eval(st, tcp(in, sp, out, 80, tcpflag::SYN), Direction::Egress).allowed());
  REQUIRE(stateful_eval(st, tcp(out, 80, in, sp, tcpflag::SYN | tcpflag::ACK), Direction::Ingress).allowed());
  REQUIRE(stateful_eval(st, tcp(in, sp, out, 80, tcpflag::ACK), Direction::Egress).allowed());
}

}  // namespace

TEST_CASE("packet filter examples") {
  const auto rs = Ruleset::parse(kWeb);
  auto web = filter_eval(rs, tcp("198.51.100.7", 40000, "10.0.0.5", 80, tcpflag::SYN), Direction::Ingress);
  CHECK(web.allowed());
  CHECK(web.reason == "rule 10");
  auto dns = filter_eval(rs, udp("198.51.100.7", 40000, "10.0.0.5", 53), Direction::Ingress);
  CHECK(dns.verdict == Verdict::Deny);
  CHECK(dns.reason == "default");
  auto spoof = filter_eval(rs, tcp("10.9.9.9", 40000, "10.0.0.5", 80, tcpflag::SYN), Direction::Ingress);
  CHECK(spoof.verdict == Verdict::Deny);
  CHECK(spoof.reason == "spoof");
  // the same source leaving the site is ordinary egress
  CHECK(filter_eval(rs, tcp("10.9.9.9", 40000, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress).reason == "default");
}

TEST_CASE("empty rulesets fall back to the default") {
  const auto deny_all = Ruleset::parse("default deny\n");
  const auto allow_all = Ruleset::parse("default allow\n");
  std::mt19937 rng(7);
  for (int i = 0; i < 300; ++i) {
    IpDatagram d = (i % 2) ? tcp("1.2.3.4", rng() % 65536, "5.6.7.8", rng() % 65536, rng() % 32)
                           : udp("9.9.9.9", rng() % 65536, "10.1.1.1", rng() % 65536);
    d.src = IpAddr{static_cast<std::uint32_t>(rng())};
    d.dst = IpAddr{static_cast<std::uint32_t>(rng())};
    const auto dir = (i % 3) ? Direction::Ingress : Direction::Egress;
    CHECK(filter_eval(deny_all, d, dir).verdict == Verdict::Deny);
    CHECK(filter_eval(allow_all, d, dir).verdict == Verdict::Allow);
  }
}

TEST_CASE("first match wins by position, not by insertion order") {
  Ruleset rs = Ruleset::parse(R"(default allow
20 ingress allow tcp * * * 22
10 ingress deny tcp * * 10.0.0.0/24 *
)");
  REQUIRE(rs.rules.front().position == 10);
  auto d = tcp("1.1.1.1", 1000, "10.0.0.9", 22, tcpflag::SYN);
  CHECK(filter_eval(rs, d, Direction::Ingress).reason == "rule 10");
  d.dst = IpAddr::parse("10.0.1.9");
  CHECK(filter_eval(rs, d, Direction::Ingress).reason == "rule 20");
  CHECK(filter_eval(rs, d, Direction::Egress).reason == "default");
}

TEST_CASE("permuting disjoint rules never changes a verdict") {
  // each rule owns one destination port, so matches are disjoint
  std::vector<FirewallRule> rules;
  for (int i = 0; i < 12; ++i) {
    FirewallRule r;
    r.position = 10 * (i + 1);
    r.direction = Direction::Ingress;
    r.action = (i % 3 == 0) ? Verdict::Deny : Verdict::Allow;
    r.protocol = (i % 2) ? proto::TCP : proto::UDP;
    r.dst_ports = PortRange{static_cast<std::uint16_t>(100 + i), static_cast<std::uint16_t>(100 + i)};
    rules.push_back(r);
  }
  std::vector<IpDatagram> probes;
  for (std::uint16_t p = 95; p < 120; ++p) {
    probes.push_back(tcp("1.1.1.1", 5, "2.2.2.2", p, tcpflag::SYN));
    probes.push_back(udp("1.1.1.1", 5, "2.2.2.2", p));
  }
  auto verdicts = [&](const std::vector<FirewallRule>& order) {
    Ruleset rs;
    std::vector<int> positions;
    for (const auto& r : order) positions.push_back(r.position);
    // reassign positions so the permutation is what decides order
    std::sort(positions.begin(), positions.end());
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto r = order[i];
      r.position = positions[i];
      rs.add(r);
    }
    std::vector<Verdict> out;
    for (const auto& d : probes) out.push_back(filter_eval(rs, d, Direction::Ingress).verdict);
    return out;
  };
  const auto base = verdicts(rules);
  std::mt19937 rng(11);
  for (int k = 0; k < 50; ++k) {
    auto perm = rules;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(verdicts(perm) == base);
  }
}

TEST_CASE("ruleset text round trip and syntax errors") {
  const auto rs = Ruleset::parse(R"(# web only
default deny
protect 10.0.0.0/8
10 ingress allow tcp * 1024-65535 10.0.0.5 80
20 egress deny udp 10.0.0.0/8 * * 53   # no outbound dns
)");
  CHECK(rs.rules.size() == 2);
  CHECK(rs.rules[0].dst->to_string() == "10.0.0.5/32");
  CHECK(rs.rules[0].src_ports.lo == 1024);
  const auto again = Ruleset::parse(rs.to_text());
  CHECK(again.to_text() == rs.to_text());

  for (const char* bad : {"", "allow\n", "default maybe\n", "default deny\n10 sideways allow tcp * * * *\n",
                          "default deny\n10 ingress allow tcp * 90-80 * *\n", "default deny\n10 ingress allow tcp *\n",
                          "default deny\nx ingress allow tcp * * * *\n", "default deny\n10 ingress allow tcp * 70000 * *\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(Ruleset::parse(bad), Error);
  }
}

TEST_CASE("stateful: segments outside a connection are refused") {
  ConnState st;
  auto d = stateful_eval(st, tcp("10.0.0.5", 4000, "8.8.8.8", 80, tcpflag::ACK, "GET /"), Direction::Egress);
  CHECK(d.verdict == Verdict::Deny);
  CHECK(d.reason == "no-connection");
  // paired allow: same segment after a handshake
  handshake(st, "10.0.0.5", 4000, "8.8.8.8");
  CHECK(stateful_eval(st, tcp("10.0.0.5", 4000, "8.8.8.8", 80, tcpflag::ACK, "GET /"), Direction::Egress).allowed());
  // data before the handshake completes
  REQUIRE(stateful_eval(st, tcp("10.0.0.5", 4001, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress).allowed());
  CHECK(stateful_eval(st, tcp("8.8.8.8", 80, "10.0.0.5", 4001, tcpflag::ACK, "hi"), Direction::Ingress).reason ==
        "no-connection");
  CHECK(st.consistent());
}

TEST_CASE("stateful: per-address connection cap") {
  ConnState st;
  st.max_conns_per_ip = 3;
  for (std::uint16_t p = 1; p <= 3; ++p) {
    CHECK(stateful_eval(st, tcp("10.0.0.5", p, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress).allowed());
  }
  auto fourth = stateful_eval(st, tcp("10.0.0.5", 4, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress);
  CHECK(fourth.reason == "conn-cap");
  // another address is unaffected
  CHECK(stateful_eval(st, tcp("10.0.0.6", 4, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress).allowed());
  // closing one frees a slot
  CHECK(stateful_eval(st, tcp("10.0.0.5", 1, "8.8.8.8", 80, tcpflag::RST), Direction::Egress).allowed());
  CHECK(stateful_eval(st, tcp("10.0.0.5", 4, "8.8.8.8", 80, tcpflag::SYN), Direction::Egress).allowed());
  CHECK(st.consistent());
}

TEST_CASE("stateful: data cap per destination") {
  ConnState st;
  st.max_bytes_to_dest = 1000;
  handshake(st, "10.0.0.5", 4000, "8.8.8.8");
  const std::string c900(900, 'a'), c200(200, 'b'), c100(100, 'c');
  CHECK(stateful_eval(st, tcp("10.0.0.5", 4000, "8.8.8.8", 80, tcpflag::ACK, c900), Direction::Egress).allowed());
  auto over = stateful_eval(st, tcp("10.0.0.5", 4000, "8.8.8.8", 80, tcpflag::ACK, c200), Direction::Egress);
  CHECK(over.reason == "data-cap");
  CHECK(stateful_eval(st, tcp("10.0.0.5", 4000, "8.8.8.8", 80, tcpflag::ACK, c100), Direction::Egress).allowed());
  CHECK(st.bytes_to_dest.at({IpAddr::parse("10.0.0.5"), IpAddr::parse("8.8.8.8")}) == 1000);
  // a second connection to the same destination shares the budget
  handshake(st, "10.0.0.5", 4001, "8.8.8.8");
  CHECK(stateful_eval(st, tcp("10.0.0.5", 4001, "8.8.8.8", 80, tcpflag::ACK, "z"), Direction::Egress).reason ==
        "data-cap");
  // ingress data is not metered
  CHECK(stateful_eval(st, tcp("8.8.8.8", 80, "10.0.0.5", 4000, tcpflag::ACK, c900), Direction::Ingress).allowed());
}

TEST_CASE("stateful: random traffic keeps the table consistent and teardown sticks") {
  std::mt19937 rng(2024);
  ConnState st;
  st.max_conns_per_ip = 4;
  const char* inside[] = {"10.0.0.5", "10.0.0.6", "10.0.0.7"};
  const char* outside[] = {"8.8.8.8", "1.1.1.1"};
  const std::uint8_t flag_pool[] = {tcpflag::SYN, tcpflag::SYN | tcpflag::ACK, tcpflag::ACK, tcpflag::FIN | tcpflag::ACK,
                                    tcpflag::RST};
  std::set<stack::Quad> torn;
  for (int i = 0; i < 5000; ++i) {
    const char* in = inside[rng() % 3];
    const char* out = outside[rng() % 2];
    const std::uint16_t port = 1000 + rng() % 6;
    const auto flags = flag_pool[rng() % 5];
    const bool from_in = rng() % 2;
    auto d = from_in ? tcp(in, port, out, 80, flags, rng() % 4 ? "" : "data")
                     : tcp(out, 80, in, port, flags, rng() % 4 ? "" : "data");
    const stack::Quad q{IpAddr::parse(in), port, IpAddr::parse(out), 80};
    const bool open = flags == tcpflag::SYN && from_in;
    const auto dec = stateful_eval(st, d, from_in ? Direction::Egress : Direction::Ingress);
    if (flags & (tcpflag::FIN | tcpflag::RST)) {
      torn.insert(q);
      CHECK(st.table.count(q) == 0);
    }
    if (open && dec.allowed()) torn.erase(q);
    for (const auto& t : torn) CHECK(st.table.count(t) == 0);
    REQUIRE(st.consistent());
    for (const auto& [ip, n] : st.per_ip_conn_count) CHECK(n <= st.max_conns_per_ip);
  }
}

TEST_CASE("stateful passes non-tcp") {
  ConnState st;
  CHECK(stateful_eval(st, udp("1.1.1.1", 1, "2.2.2.2", 2), Direction::Ingress).reason == "not-tcp");
}

TEST_CASE("personal firewall") {
  PersonalPolicy p;
  p.allowed_sites = {Prefix::parse("203.0.113.0/24")};
  p.blocked_sites = {Prefix::parse("203.0.113.66/32")};
  p.scan = true;
  p.virus_tokens = {"EICAR"};
  CHECK(personal_eval(p, udp("203.0.113.5", 1, "10.0.0.10", 2), Direction::Ingress).allowed());
  CHECK(personal_eval(p, udp("203.0.113.66", 1, "10.0.0.10", 2), Direction::Ingress).reason == "blocked-site");
  CHECK(personal_eval(p, udp("198.51.100.1", 1, "10.0.0.10", 2), Direction::Ingress).reason == "not-allowed");
  CHECK(personal_eval(p, udp("10.0.0.10", 2, "203.0.113.5", 1), Direction::Egress).allowed());
  auto virus = personal_eval(p, udp("203.0.113.5", 1, "10.0.0.10", 2, "x-EICAR-x"), Direction::Ingress);
  CHECK(virus.verdict == Verdict::Deny);
  CHECK(virus.reason.rfind("scan", 0) == 0);
  p.scan = false;
  CHECK(personal_eval(p, udp("203.0.113.5", 1, "10.0.0.10", 2, "x-EICAR-x"), Direction::Ingress).allowed());
}

TEST_CASE("scanner cannot read sealed payloads") {
  PersonalPolicy p;
  p.scan = true;
  p.virus_tokens = {"EICAR"};
  symcrypto::KeyFactory kf(1);
  auto k = kf.keygen_symmetric("k");
  IpDatagram d = udp("1.1.1.1", 1, "2.2.2.2", 2);
  std::get<UdpDatagram>(d.payload).data = symcrypto::seal(k, Term::plain("EICAR"));
  CHECK(personal_eval(p, d, Direction::Ingress).allowed());
}

TEST_CASE("layered evaluation short-circuits in order") {
  const auto rs = Ruleset::parse(kWeb);
  ServiceRules proxy{{"DROP TABLE"}};
  PersonalPolicy personal;
  personal.blocked_sites = {Prefix::parse("203.0.113.66/32")};

  auto ok = layered_eval(rs, proxy, personal, tcp("198.51.100.7", 5, "10.0.0.5", 80, tcpflag::ACK, "GET /"),
                         Direction::Ingress);
  CHECK(ok.decision.allowed());
  REQUIRE(ok.trail.size() == 3);
  CHECK(ok.trail[0].layer == "filter");
  CHECK(ok.trail[1].layer == "proxy");
  CHECK(ok.trail[2].layer == "personal");

  auto filtered = layered_eval(rs, proxy, personal, udp("198.51.100.7", 5, "10.0.0.5", 53), Direction::Ingress);
  CHECK(filtered.decision.verdict == Verdict::Deny);
  CHECK(filtered.trail.size() == 1);

  // passes the header rules, fails the content rule
  auto content = layered_eval(rs, proxy, personal,
                              tcp("198.51.100.7", 5, "10.0.0.5", 80, tcpflag::ACK, "x'; DROP TABLE users"),
                              Direction::Ingress);
  CHECK(content.decision.verdict == Verdict::Deny);
  REQUIRE(content.trail.size() == 2);
  CHECK(content.trail[0].decision.allowed());
  CHECK(content.trail[1].layer == "proxy");

  auto personal_no = layered_eval(rs, proxy, personal, tcp("203.0.113.66", 5, "10.0.0.5", 80, tcpflag::ACK, "GET /"),
                                  Direction::Ingress);
  CHECK(personal_no.trail.size() == 3);
  CHECK(personal_no.decision.reason == "blocked-site");
}

TEST_CASE("proxy relays and hides the client") {
  Internetwork inet(topo::proxy());
  ProxyBinding b{"http", "P", IpAddr::parse("10.0.0.2"), IpAddr::parse("198.51.100.2"), "S", 80, {{"DROP TABLE"}}};
  auto echo = [](const Term& req) { return Term::pair(Term::plain("200"), req); };
  auto r = proxy_relay(inet, b, "C", Term::plain("GET /"), echo);
  CHECK(r.server_saw == IpAddr::parse("198.51.100.2"));
  CHECK(r.response == Term::pair(Term::plain("200"), Term::plain("GET /")));
  // no server RECV anywhere carries the client's address
  const auto client_seen = simnet::count_events(inet.net().trace(), {"S", simnet::Action::Recv, std::nullopt,
                                                                     "10.0.0.5", 0});
  CHECK(client_seen == 0);
  const auto proxy_seen = simnet::count_events(inet.net().trace(), {"S", simnet::Action::Recv, std::nullopt,
                                                                    "198.51.100.2", 0});
  CHECK(proxy_seen > 0);
}

TEST_CASE("proxy refuses banned content and relays nothing") {
  Internetwork inet(topo::proxy());
  ProxyBinding b{"http", "P", IpAddr::parse("10.0.0.2"), IpAddr::parse("198.51.100.2"), "S", 80, {{"DROP TABLE"}}};
  inet.bind_app("S", 80);
  try {
    proxy_relay(inet, b, "C", Term::plain("x; DROP TABLE users"), nullptr);
    FAIL("expected PolicyViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PolicyViolation);
  }
  CHECK(inet.inbox("S", 80).empty());
  CHECK(simnet::count_events(inet.net().trace(), {"P", simnet::Action::Drop, std::nullopt, "proxy http", 0}) == 1);
}

TEST_CASE("proxy serves outside clients symmetrically") {
  Internetwork inet(topo::proxy());
  ProxyBinding b{"smtp", "P", IpAddr::parse("198.51.100.2"), IpAddr::parse("10.0.0.2"), "W", 25, {{"VIRUS"}}};
  auto r = proxy_relay(inet, b, "O", Term::plain("HELO"), [](const Term&) { return Term::plain("250"); });
  CHECK(r.server_saw == IpAddr::parse("10.0.0.2"));
  CHECK(r.response == Term::plain("250"));
  // banned content in the response is caught too
  CHECK_THROWS_AS(proxy_relay(inet, b, "O", Term::plain("DATA"), [](const Term&) { return Term::plain("VIRUS"); }),
                  Error);
}

TEST_CASE("firewall config sections") {
  const auto cfg = FirewallConfig::parse("edge", R"(default deny
protect 10.0.0.0/24
stateful conns=2 bytes=500
ban EVIL
10 ingress allow tcp * * 10.0.0.10 80
20 egress allow * 10.0.0.0/24 * * *
personal H block 198.51.100.66
personal H scan EICAR
)");
  CHECK(cfg.rules.rules.size() == 2);
  REQUIRE(cfg.stateful);
  CHECK(cfg.stateful->max_conns_per_ip == 2);
  CHECK(cfg.stateful->max_bytes_to_dest == 500);
  CHECK(cfg.content.banned_tokens == std::vector<std::string>{"EVIL"});
  REQUIRE(cfg.personal.count("H"));
  CHECK(cfg.personal.at("H").scan);
  CHECK_THROWS_AS(FirewallConfig::parse("x", "default deny\nstateful conns=two\n"), Error);
  CHECK_THROWS_AS(FirewallConfig::parse("x", "default deny\npersonal H frob 1.2.3.4\n"), Error);
}

TEST_CASE("site firewall on the wire") {
  Internetwork inet(topo::site());
  inet.converge();
  SiteFirewall fw(FirewallConfig::parse("edge", R"(default deny
protect 10.0.0.0/24
stateful conns=3 bytes=1000
10 ingress allow tcp * * 10.0.0.10 80
20 egress allow * 10.0.0.0/24 * * *
30 ingress allow tcp * 80 10.0.0.0/24 *
)"),
                  "FW");
  fw.install(inet);
  inet.tcp_listen("H", 80);
  auto key = inet.tcp_open("X", IpAddr::parse("10.0.0.10"), 80);
  inet.run();
  CHECK(inet.conn("X", key)->state == stack::TcpState::Established);
  REQUIRE(fw.conn_state());
  CHECK(fw.conn_state()->table.size() == 1);
  CHECK(fw.conn_state()->consistent());

  // ssh is not admitted
  auto ssh = inet.tcp_open("X", IpAddr::parse("10.0.0.10"), 22);
  inet.run();
  CHECK(inet.conn("X", ssh)->state != stack::TcpState::Established);
  CHECK(simnet::count_events(inet.net().trace(), {"FW", simnet::Action::Drop, std::nullopt, "deny (default)", 0}) >= 1);

  // the modem host is reached without any firewall decision
  const auto before = inet.net().trace().size();
  inet.tcp_listen("B", 22);
  auto side = inet.tcp_open("X", IpAddr::parse("10.0.1.20"), 22);
  inet.run();
  CHECK(inet.conn("X", side)->state == stack::TcpState::Established);
  CHECK(simnet::count_events(inet.net().trace(), {std::nullopt, std::nullopt, std::nullopt, "fw:", before}) == 0);
}
