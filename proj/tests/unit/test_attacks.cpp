#include "doctest.h"
#include "netsec/attacks.hpp"
#include "netsec/error.hpp"

using namespace netsec;
using namespace netsec::attacks;
using netsec::stack::Internetwork;
using netsec::simnet::TopologySpec;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::InvalidArgument;
}

Traffic udp_frames(const std::string& from, const std::string& to, int n) {
  return [=](Internetwork& inet) {
    inet.bind_app(to, 4000);
    for (int i = 0; i < n; ++i) inet.send_udp(from, inet.primary_ip(to), 4000, 4000, Term::plain("f"));
  };
}

struct HijackSetup {
  Internetwork inet{topo::lan_trio()};
  HijackTarget target;

  explicit HijackSetup(bool ah) {
    inet.net().attach_segment_tap(*inet.net().find_domain("L"), "M");
    if (ah) {
      stack::NetChannel ch(inet);
      stack::secure_flow(inet, "C", "S", ipsec::Protocol::AH, ch);
    }
    inet.tcp_listen("S", 23);
    auto key = inet.tcp_open("C", inet.primary_ip("S"), 23);
    inet.run();
    inet.tcp_send("C", key, "ls\n");
    inet.run();
    target = {"C", key};
  }
};

}  // namespace

TEST_CASE("wiretap counts frames and refuses fiber") {
  TopologySpec s;
  s.host("A", {"10.0.0.1/24"}).host("B", {"10.0.0.2/24"}).host("E", {"10.0.0.3/24"});
  s.link("A", "B").link("A", "E", false);
  {
    Internetwork inet(s);
    auto r = wiretap_capture(inet, "A", "B", "E", udp_frames("A", "B", 5));
    CHECK(r.metric("frames_captured") == 5);
    const auto sends = simnet::count_events(inet.net().trace(), {std::nullopt, simnet::Action::Send,
                                                                 simnet::Layer::Link, "A-B", 0});
    CHECK(sends == 5);
  }
  {
    Internetwork inet(s);
    CHECK(wiretap_capture(inet, "A", "B", "E", nullptr).metric("frames_captured") == 0);
  }
  Internetwork inet(s);
  CHECK(code_of([&] { wiretap_capture(inet, "A", "E", "B", nullptr); }) == Errc::LinkNotTappable);
}

TEST_CASE("nic clone steals frames and optionally puts copies back") {
  for (bool reinject : {false, true}) {
    Internetwork inet(topo::lan_trio("A", "V", "I"));
    auto r = reprogram_nic(inet, "I", "V", reinject, udp_frames("A", "V", 3));
    CHECK(r.metric("frames_stolen") == 3);
    CHECK(r.metric("victim_received") == (reinject ? 3 : 0));
    CHECK(inet.inbox("V", 4000).size() == (reinject ? 3u : 0u));
  }
  TopologySpec s;
  s.host("A", {"10.0.0.1/24"}).host("B", {"10.0.0.2/24"}).link("A", "B");
  Internetwork inet(s);
  CHECK(code_of([&] { reprogram_nic(inet, "A", "B", false, nullptr); }) == Errc::NotSameDomain);
}

TEST_CASE("hijack: storm of 2R acks, then the client closes") {
  for (int r : {1, 3, 5, 8}) {
    HijackSetup h(false);
    auto rep = hijack_session(h.inet, "M", h.target, "rm -rf /\n", r);
    CHECK(rep.metric("storm_acks") == 2 * r);
    CHECK(rep.metric("client_closed") == 1);
    CHECK(rep.metric("injected") == 1);
    CHECK(h.inet.conn("C", h.target.conn)->state == stack::TcpState::Closed);
  }
}

TEST_CASE("hijack prediction is the server's rcv_nxt") {
  HijackSetup h(false);
  const stack::ConnKey server_view{h.target.conn.remote_ip, h.target.conn.remote_port, h.target.conn.local_ip,
                                   h.target.conn.local_port};
  const auto expected = h.inet.conn("S", server_view)->rcv_nxt;
  auto rep = hijack_session(h.inet, "M", h.target, "x");
  CHECK(rep.metric("predicted_seq") == expected);
}

TEST_CASE("zero-byte injection causes no storm") {
  HijackSetup h(false);
  auto rep = hijack_session(h.inet, "M", h.target, "");
  CHECK(rep.metric("storm_acks") == 0);
  CHECK(rep.metric("client_closed") == 0);
}

TEST_CASE("hijack without a tap") {
  Internetwork inet(topo::lan_trio());
  inet.tcp_listen("S", 23);
  auto key = inet.tcp_open("C", inet.primary_ip("S"), 23);
  inet.run();
  CHECK(code_of([&] { hijack_session(inet, "M", {"C", key}, "x"); }) == Errc::NoTap);
}

TEST_CASE("hijack against an AH-protected flow injects nothing") {
  HijackSetup h(true);
  CHECK(h.inet.conn("C", h.target.conn)->state == stack::TcpState::Established);
  auto rep = hijack_session(h.inet, "M", h.target, "rm -rf /\n");
  CHECK(rep.metric("injected") == 0);
  CHECK_FALSE(rep.success);
  CHECK(rep.metric("storm_acks") == 0);
}

TEST_CASE("mitm substitutes keys unless certificates are checked") {
  {
    Internetwork inet(topo::mitm_line());
    inet.converge();
    auto r = mitm_pubkey(inet, "M", "A", "B", "pay 10", std::string("pay 99"), false);
    CHECK(r.metric("intercepted") == 1);
    CHECK(r.metric("tampered") == 1);
    CHECK(r.metric("detected") == 0);
    REQUIRE(r.notes.size() == 1);
    CHECK(r.notes[0] == "B received: pay 99");
  }
  {
    Internetwork inet(topo::mitm_line());
    inet.converge();
    auto r = mitm_pubkey(inet, "M", "A", "B", "pay 10", std::string("pay 99"), true);
    CHECK(r.metric("detected") == 1);
    CHECK(r.metric("tampered") == 0);
    CHECK_FALSE(r.success);
    CHECK(simnet::count_events(inet.net().trace(), {std::string("A"), simnet::Action::Note, std::nullopt,
                                                    "cert_verify false", 0}) == 1);
  }
  {
    Internetwork inet(topo::mitm_line());
    inet.converge();
    auto r = mitm_pubkey(inet, "M", "A", "B", "pay 10", std::nullopt, false);
    CHECK(r.metric("intercepted") == 1);
    CHECK(r.notes[0] == "B received: pay 10");
  }
  Internetwork inet(topo::lan_trio("A", "B", "M"));
  CHECK(code_of([&] { mitm_pubkey(inet, "M", "A", "B", "x", std::nullopt, false); }) == Errc::NotOnPath);
}

TEST_CASE("echo-chargen loop fills the budget") {
  Internetwork inet(topo::lan_trio("A", "B", "M"), 0, 1000);
  inet.enable_service("A", stack::kChargenPort);
  inet.enable_service("B", stack::kEchoPort);
  auto r = echo_chargen(inet, "M", "A", "B");
  CHECK(r.metric("messages_exchanged") >= 990);
  CHECK(r.metric("max_len") <= 512);
  CHECK(r.metric("min_len") >= 0);
  CHECK(r.metric("hit_budget") == 1);
  CHECK(inet.net().trace().back().detail == "budget");

  for (int disabled = 0; disabled < 2; ++disabled) {
    Internetwork off(topo::lan_trio("A", "B", "M"), 0, 1000);
    if (disabled != 0) off.enable_service("A", stack::kChargenPort);
    if (disabled != 1) off.enable_service("B", stack::kEchoPort);
    auto q = echo_chargen(off, "M", "A", "B");
    CHECK(q.metric("messages_exchanged") <= 1);
    CHECK(q.metric("hit_budget") == 0);
  }
}

TEST_CASE("smurf amplification and both mitigations") {
  auto run = [](int hosts, bool router_fix, bool host_fix) {
    Internetwork inet(topo::smurf(hosts));
    if (router_fix) inet.policy("R").directed_broadcast = false;
    if (host_fix) {
      for (int i = 1; i <= hosts; ++i) inet.policy("H" + std::to_string(i)).broadcast_echo = false;
    }
    return smurf(inet, "M", inet.primary_ip("V"), "AMP").metric("replies_to_victim");
  };
  for (int n : {1, 3, 5, 9}) CHECK(run(n, false, false) == n);
  CHECK(run(5, true, false) == 0);
  CHECK(run(5, false, true) == 0);
  Internetwork inet(topo::smurf(2));
  CHECK(code_of([&] { smurf(inet, "M", inet.primary_ip("V"), "nope"); }) == Errc::UnknownDomain);
}

TEST_CASE("redirect captures 12 routes and blackholes every probe") {
  Internetwork inet(topo::redirect());
  std::vector<Probe> probes;
  for (int i = 0; i < 10; ++i) probes.push_back({"S", "H" + std::to_string(1 + i % 4)});
  auto r = redirect_blackhole(inet, "X", probes);
  CHECK(r.metric("baseline_delivered") == 10);
  CHECK(r.metric("routes_captured") == 12);
  CHECK(r.metric("packets_blackholed") == 10);
  CHECK(r.metric("delivered") == 0);
  CHECK(code_of([&] { redirect_blackhole(inet, "S", probes); }) == Errc::NotARouter);
}

TEST_CASE("dns poisoning lasts exactly one ttl") {
  auto setup = [](Internetwork& inet) {
    auto& d = inet.dns_server("D");
    d.authoritative["www.bank"] = IpAddr::parse("10.0.0.80");
    d.upstream = inet.primary_ip("U");
  };
  {
    Internetwork inet(topo::dns(3));
    setup(inet);
    auto r = dns_poison(inet, "M", "D", "www.bank", IpAddr::parse("10.0.0.66"), 50, {"C1", "C2", "C3"});
    CHECK(r.metric("poisoned_answers") == 3);
    CHECK(r.metric("recovered") == 1);
  }
  {
    Internetwork inet(topo::dns(3));
    setup(inet);
    auto r = dns_poison(inet, "M", "D", "www.bank", IpAddr::parse("10.0.0.66"), 0, {"C1", "C2", "C3"});
    CHECK(r.metric("poisoned_answers") == 0);
  }
  {
    // without an upstream configured the forged answer is not believed
    Internetwork inet(topo::dns(1));
    inet.dns_server("D").authoritative["www.bank"] = IpAddr::parse("10.0.0.80");
    auto r = dns_poison(inet, "M", "D", "www.bank", IpAddr::parse("10.0.0.66"), 50, {"C1"});
    CHECK(r.metric("poisoned_answers") == 0);
  }
}

TEST_CASE("syn flood saturates at capacity and recovers after the timeout") {
  for (int n : {7, 8, 12}) {
    Internetwork inet(topo::flood(0));
    auto pool = unused_addresses(inet, 16);
    auto r = syn_flood(inet, "M", "S", 80, n, pool, "G");
    CHECK(r.metric("genuine_rejected") == (n >= 8 ? 1 : 0));
    CHECK(r.metric("genuine_recovered") == 1);
    CHECK(r.metric("admitted") == std::min(n, 8));
    CHECK(r.metric("discarded") == std::max(0, n - 8));
    CHECK(r.metric("peak_queue") <= 8);
  }
  Internetwork inet(topo::flood(0));
  CHECK(code_of([&] { syn_flood(inet, "M", "S", 80, 1, {inet.primary_ip("G")}, "G"); }) == Errc::InvalidArgument);
}

TEST_CASE("ddos: zombies times count") {
  {
    Internetwork inet(topo::flood(4));
    for (int i = 1; i <= 4; ++i) inet.policy("Z" + std::to_string(i)).compromised = true;
    auto r = ddos_campaign(inet, "M", {"Z1", "Z2", "Z3", "Z4"}, "S", 80, 3, "G");
    CHECK(r.metric("syns_received") == 12);
    CHECK(r.metric("victim_saturated") == 1);
  }
  {
    Internetwork inet(topo::flood(0));
    auto r = ddos_campaign(inet, "M", {}, "S", 80, 3, "G");
    CHECK(r.metric("syns_received") == 0);
    CHECK(r.metric("victim_saturated") == 0);
  }
  Internetwork inet(topo::flood(1));
  CHECK(code_of([&] { ddos_campaign(inet, "M", {"Z1"}, "S", 80, 3, "G"); }) == Errc::ZombieNotCompromised);
}
