#include <algorithm>
#include <random>

#include "doctest.h"
#include "netsec/error.hpp"
#include "netsec/ipsec.hpp"

using namespace netsec;
using namespace netsec::ipsec;

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

IpAddr ip(const char* s) { return IpAddr::parse(s); }

IpDatagram udp(const char* src, const char* dst, const std::string& text) {
  IpDatagram d;
  d.src = ip(src);
  d.dst = ip(dst);
  d.protocol = proto::UDP;
  d.payload = UdpDatagram{4000, 4000, Term::plain(text)};
  return d;
}

// Hand-built SA pair for traffic from 10.0.0.1 to 10.0.0.2.
struct HandPair {
  SecurityAssociation out;
  Sadb in;
};

HandPair hand_pair(Protocol p, symcrypto::KeyFactory& keys) {
  HandPair r;
  r.out.spi = 300;
  r.out.partner_ip = ip("10.0.0.2");
  r.out.direction = Direction::Outbound;
  r.out.protocol = p;
  r.out.hmac_alg = "hmac-sha256";
  r.out.hmac_key = keys.keygen_symmetric("mac");
  if (p == Protocol::ESP) r.out.enc_key = keys.keygen_symmetric("enc");
  auto in = r.out;
  in.partner_ip = ip("10.0.0.1");
  in.direction = Direction::Inbound;
  r.in.add(in);
  return r;
}

struct Endpoints {
  symcrypto::KeyFactory keys{7};
  IpsecEndpoint a = make_endpoint("A", ip("10.0.0.1"), keys, "CA", {"CA"});
  IpsecEndpoint b = make_endpoint("B", ip("10.0.0.2"), keys, "CA", {"CA"});
  DirectChannel ch;
};

}  // namespace

TEST_CASE("AH round trip and payload length") {
  symcrypto::KeyFactory keys(1);
  auto p = hand_pair(Protocol::AH, keys);
  auto wire = ah_protect(p.out, udp("10.0.0.1", "10.0.0.2", "hello"), 0);
  CHECK(wire.protocol == proto::AH);
  const auto& ah = std::get<AhPacket>(wire.payload);
  CHECK(ah.header.auth_data.size() == 12);
  CHECK(ah.header.payload_length == 6);
  CHECK(ah.header.next_header == proto::UDP);
  auto back = ah_verify(p.in, wire, 0);
  CHECK(back == udp("10.0.0.1", "10.0.0.2", "hello"));
}

TEST_CASE("AH ignores ttl but covers every other field") {
  symcrypto::KeyFactory keys(2);
  auto p = hand_pair(Protocol::AH, keys);
  auto wire = ah_protect(p.out, udp("10.0.0.1", "10.0.0.2", "hello"), 0);

  auto hop = wire;
  hop.ttl -= 3;
  CHECK_NOTHROW(ah_verify(p.in, hop, 0));

  auto fresh = hand_pair(Protocol::AH, keys);
  auto w2 = ah_protect(fresh.out, udp("10.0.0.1", "10.0.0.2", "hello"), 0);
  {
    auto bad = w2;
    bad.dst = ip("10.0.0.9");
    CHECK(code_of([&] { ah_verify(fresh.in, bad, 0); }) == Errc::BadMac);
  }
  {
    auto bad = w2;
    std::get<AhPacket>(bad.payload).inner = transport_to_term(UdpDatagram{4000, 4000, Term::plain("hellO")});
    CHECK(code_of([&] { ah_verify(fresh.in, bad, 0); }) == Errc::BadMac);
  }
  {
    auto bad = w2;
    std::get<AhPacket>(bad.payload).header.sequence += 1;
    CHECK(code_of([&] { ah_verify(fresh.in, bad, 0); }) == Errc::BadMac);
  }
  {
    auto bad = w2;
    std::get<AhPacket>(bad.payload).header.next_header = proto::TCP;
    CHECK(code_of([&] { ah_verify(fresh.in, bad, 0); }) == Errc::BadMac);
  }
  // a source change misses the SA index altogether
  auto bad = w2;
  bad.src = ip("10.0.0.9");
  CHECK(code_of([&] { ah_verify(fresh.in, bad, 0); }) == Errc::UnknownSpi);
  CHECK_NOTHROW(ah_verify(fresh.in, w2, 0));
}

TEST_CASE("replay, direction and lifetime") {
  symcrypto::KeyFactory keys(3);
  auto p = hand_pair(Protocol::AH, keys);
  auto wire = ah_protect(p.out, udp("10.0.0.1", "10.0.0.2", "x"), 0);
  CHECK_NOTHROW(ah_verify(p.in, wire, 0));
  CHECK(code_of([&] { ah_verify(p.in, wire, 0); }) == Errc::ReplayedSeq);
  auto second = ah_protect(p.out, udp("10.0.0.1", "10.0.0.2", "y"), 0);
  CHECK(std::get<AhPacket>(second.payload).header.sequence == 2);
  CHECK_NOTHROW(ah_verify(p.in, second, 0));

  // traffic the other way has no inbound SA
  auto reverse = ah_protect(p.out, udp("10.0.0.2", "10.0.0.1", "z"), 0);
  CHECK(code_of([&] { ah_verify(p.in, reverse, 0); }) == Errc::UnknownSpi);

  auto inbound = *p.in.find(300, ip("10.0.0.1"));
  CHECK(code_of([&] { ah_protect(inbound, udp("10.0.0.1", "10.0.0.2", "x"), 0); }) == Errc::InvalidArgument);

  auto late = hand_pair(Protocol::AH, keys);
  const auto end = late.out.established + late.out.lifespan;
  CHECK_NOTHROW(ah_protect(late.out, udp("10.0.0.1", "10.0.0.2", "x"), end));
  CHECK(code_of([&] { ah_protect(late.out, udp("10.0.0.1", "10.0.0.2", "x"), end + 1); }) == Errc::SaExpired);
  auto w = ah_protect(late.out, udp("10.0.0.1", "10.0.0.2", "x"), 0);
  CHECK(code_of([&] { ah_verify(late.in, w, end + 1); }) == Errc::SaExpired);
}

TEST_CASE("ESP hides the payload and leaves the outer header uncovered") {
  symcrypto::KeyFactory keys(4);
  auto p = hand_pair(Protocol::ESP, keys);
  auto wire = esp_protect(p.out, udp("10.0.0.1", "10.0.0.2", "top secret"), 0);
  const auto& esp = std::get<EspPacket>(wire.payload);
  CHECK_FALSE(symcrypto::exposes_text(esp.payload, "top secret"));
  CHECK((symcrypto::serialize(esp.payload).size() + esp.pad_length + 2) % 4 == 0);
  CHECK(esp.padding.size() == esp.pad_length);

  auto moved = wire;
  moved.ttl = 1;
  moved.dst = ip("10.0.0.77");
  auto back = esp_open(p.in, moved, 0);
  CHECK(std::get<UdpDatagram>(back.payload).data == Term::plain("top secret"));

  auto p2 = hand_pair(Protocol::ESP, keys);
  auto w2 = esp_protect(p2.out, udp("10.0.0.1", "10.0.0.2", "top secret"), 0);
  auto flipped = w2;
  auto& fp = std::get<EspPacket>(flipped.payload);
  fp.payload = symcrypto::tamper(fp.payload, keys.keygen_symmetric("eve"));
  CHECK(code_of([&] { esp_open(p2.in, flipped, 0); }) == Errc::BadMac);
  CHECK(code_of([&] { esp_protect(p2.out, udp("10.0.0.1", "10.0.0.2", "x"), 5000); }) == Errc::SaExpired);
}

TEST_CASE("VPN tunnel") {
  symcrypto::KeyFactory keys(5);
  Tunnel t{"t1", ip("203.0.113.1"), ip("198.51.100.1"), Prefix::parse("192.168.2.0/24"), keys.keygen_symmetric("t1")};
  auto inner = udp("192.168.1.5", "192.168.2.7", "payroll");
  auto outer = vpn_encapsulate(t, inner);
  CHECK(outer.protocol == proto::IPIP);
  CHECK(outer.src == t.local_public);
  CHECK(outer.dst == t.peer_public);
  CHECK_FALSE(symcrypto::exposes_text(std::get<Term>(outer.payload), "payroll"));
  CHECK(vpn_decapsulate(outer, t.key, t.peer_public) == inner);

  CHECK(code_of([&] { vpn_decapsulate(outer, keys.keygen_symmetric("other"), t.peer_public); }) ==
        Errc::KeyMismatch);
  auto plain = outer;
  plain.protocol = proto::UDP;
  CHECK(code_of([&] { vpn_decapsulate(plain, t.key, t.peer_public); }) == Errc::NotTunneled);
  CHECK(code_of([&] { vpn_decapsulate(outer, t.key, ip("203.0.113.99")); }) == Errc::NotTunneled);

  auto pub = udp("192.168.1.5", "8.8.8.8", "x");
  CHECK(code_of([&] { vpn_encapsulate(t, pub); }) == Errc::NoPublicAddress);
  t.allow_public_inner = true;
  CHECK_NOTHROW(vpn_encapsulate(t, pub));
  t.local_public = ip("10.1.1.1");
  CHECK(code_of([&] { vpn_encapsulate(t, inner); }) == Errc::NoPublicAddress);
}

TEST_CASE("IKE certificate exchange") {
  Endpoints e;
  ike_establish(e.a, e.b, e.ch);
  CHECK(e.a.ike_peers.count("B") == 1);
  CHECK(e.b.ike_peers.count("A") == 1);
  ike_establish(e.a, e.b, e.ch);
  CHECK(e.a.ike_peers.size() == 1);

  auto rogue = make_endpoint("R", ip("10.0.0.3"), e.keys, "EvilCA", {"CA"});
  CHECK(code_of([&] { ike_establish(e.a, rogue, e.ch); }) == Errc::CertRejected);
  CHECK(e.a.ike_peers.count("R") == 0);
}

TEST_CASE("SA negotiation") {
  Endpoints e;
  Proposal esp{Protocol::ESP, {"hmac-md5", "hmac-sha256"}, {"des", "aes256", "3des"}, {"kdf-sha1"}, 500};
  CHECK(code_of([&] { sa_establish(e.a, e.b, esp, default_ranks(), e.keys, e.ch); }) == Errc::NoIkeSa);

  ike_establish(e.a, e.b, e.ch);
  auto sa = sa_establish(e.a, e.b, esp, default_ranks(), e.keys, e.ch);
  CHECK(sa.inbound_at_initiator.spi == kFirstSpi);
  CHECK(sa.inbound_at_initiator.hmac_alg == "hmac-sha256");
  CHECK(sa.inbound_at_initiator.enc_alg == "aes256");
  CHECK(sa.inbound_at_initiator.lifespan == 500);
  CHECK(sa.outbound_at_responder.direction == Direction::Outbound);

  // the negotiated pair actually carries traffic b -> a
  auto* out = e.b.sadb.outbound_for(e.a.ip);
  REQUIRE(out);
  auto wire = esp_protect(*out, udp("10.0.0.2", "10.0.0.1", "hi"), 0);
  CHECK(std::get<UdpDatagram>(esp_open(e.a.sadb, wire, 0).payload).data == Term::plain("hi"));

  Proposal ah{Protocol::AH, {"hmac-sha1"}, {}, {}, 100};
  auto second = sa_establish(e.a, e.b, ah, default_ranks(), e.keys, e.ch);
  CHECK(second.inbound_at_initiator.spi == kFirstSpi + 1);
  CHECK_FALSE(second.inbound_at_initiator.enc_alg);
  CHECK_FALSE(second.inbound_at_initiator.enc_key);

  Proposal empty{Protocol::ESP, {"hmac-sha1"}, {}, {"kdf-sha1"}, 100};
  CHECK(code_of([&] { sa_establish(e.a, e.b, empty, default_ranks(), e.keys, e.ch); }) == Errc::EmptyProposal);
  e.b.supported = {"hmac-md5"};
  Proposal unsupported{Protocol::AH, {"hmac-sha1"}, {}, {}, 100};
  CHECK(code_of([&] { sa_establish(e.a, e.b, unsupported, default_ranks(), e.keys, e.ch); }) ==
        Errc::EmptyProposal);

  e.a.spi_limit = kFirstSpi + 1;
  e.b.supported.clear();
  CHECK(code_of([&] { sa_establish(e.a, e.b, ah, default_ranks(), e.keys, e.ch); }) == Errc::SpiExhausted);
}

TEST_CASE("property: selection picks the max-rank entry") {
  const std::vector<std::string> pool{"hmac-md5", "hmac-sha1", "hmac-sha256", "hmac-x", "hmac-y"};
  std::mt19937 rng(11);
  for (int round = 0; round < 300; ++round) {
    AlgorithmRanks ranks;
    for (const auto& a : pool) ranks[a] = static_cast<int>(rng() % 4);
    Proposal p{Protocol::AH, {}, {}, {}, 10};
    for (const auto& a : pool) {
      if (rng() % 2) p.hmacs.push_back(a);
    }
    if (p.hmacs.empty()) {
      CHECK(code_of([&] { select_algorithms(p, ranks, {}); }) == Errc::EmptyProposal);
      continue;
    }
    std::shuffle(p.hmacs.begin(), p.hmacs.end(), rng);
    // oracle: sort by (rank desc, name asc)
    auto sorted = p.hmacs;
    std::sort(sorted.begin(), sorted.end(), [&](const auto& x, const auto& y) {
      return ranks[x] != ranks[y] ? ranks[x] > ranks[y] : x < y;
    });
    CHECK(select_algorithms(p, ranks, {}).hmac == sorted.front());
  }
}

TEST_CASE("negotiation messages never show session material in plaintext") {
  Endpoints e;
  ike_establish(e.a, e.b, e.ch);
  sa_establish(e.a, e.b, {Protocol::ESP, {"hmac-sha1"}, {"aes128"}, {"kdf-sha256"}, 100}, default_ranks(), e.keys,
               e.ch);
  for (const auto& r : e.ch.log()) {
    if (r.label == "ike-cert") continue;
    CHECK_FALSE(symcrypto::exposes_text(r.sent, "dh-share"));
    CHECK_FALSE(symcrypto::exposes_text(r.sent, "sa-propose"));
  }
}
