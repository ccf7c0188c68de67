#include <random>

#include "doctest.h"
#include "netsec/error.hpp"
#include "netsec/ipsec.hpp"
#include "netsec/packet.hpp"

using namespace netsec;

TEST_CASE("addresses and prefixes") {
  auto a = IpAddr::parse("10.0.0.5");
  CHECK(a.to_string() == "10.0.0.5");
  CHECK(a.is_private());
  CHECK_FALSE(IpAddr::parse("203.0.113.7").is_private());
  CHECK(IpAddr::parse("172.20.1.1").is_private());
  CHECK(IpAddr::parse("192.168.9.9").is_private());
  CHECK_THROWS_AS(IpAddr::parse("10.0.0"), Error);
  CHECK_THROWS_AS(IpAddr::parse("10.0.0.256"), Error);
  CHECK_THROWS_AS(IpAddr::parse("1.2.3.4.5"), Error);

  auto p = Prefix::parse("10.0.0.77/24");
  CHECK(p.to_string() == "10.0.0.0/24");
  CHECK(p.contains(a));
  CHECK_FALSE(p.contains(IpAddr::parse("10.0.1.1")));
  CHECK(p.broadcast().to_string() == "10.0.0.255");
  CHECK(Prefix::parse("0.0.0.0/0").contains(a));
}

TEST_CASE("transport and datagram term images round trip") {
  IpDatagram d;
  d.src = IpAddr::parse("10.0.0.1");
  d.dst = IpAddr::parse("10.1.0.9");
  d.protocol = proto::TCP;
  d.ttl = 17;
  d.payload = TcpSegment{1234, 80, 100, 301, tcpflag::ACK, 512, "hello"};
  CHECK(term_to_datagram(datagram_to_term(d)) == d);

  d.protocol = proto::UDP;
  d.payload = UdpDatagram{5, 7, symcrypto::Term::pair(symcrypto::Term::plain("x"), symcrypto::Term::plain("y"))};
  CHECK(term_to_datagram(datagram_to_term(d)) == d);

  d.protocol = proto::ICMP;
  d.payload = IcmpMessage{IcmpMessage::kEchoReply, 0, 9, 3};
  CHECK(term_to_datagram(datagram_to_term(d)) == d);
  CHECK(summarize(d) == "ip 10.0.0.1>10.1.0.9 proto=1 ttl=17 | icmp echo-reply id=9 seq=3");
}

TEST_CASE("tcp summary renders flags and window") {
  IpDatagram d;
  d.src = IpAddr::parse("1.1.1.1");
  d.dst = IpAddr::parse("2.2.2.2");
  d.protocol = proto::TCP;
  d.payload = TcpSegment{1, 2, 100, 0, tcpflag::SYN, 65535, ""};
  CHECK(summarize(d) == "ip 1.1.1.1>2.2.2.2 proto=6 ttl=64 | tcp 1>2 seq=100 ack=0 flags=SYN win=65535 len=0");
}

TEST_CASE("hex helpers") {
  CHECK(to_hex(std::string("\x01\xab", 2)) == "01ab");
  CHECK(from_hex("01ab") == std::string("\x01\xab", 2));
  CHECK_THROWS_AS(from_hex("0"), Error);
}

// --- AH / ESP codecs ---------------------------------------------------------

TEST_CASE("AH payload_length counts whole header in 32-bit words") {
  AhHeader h;
  h.next_header = proto::TCP;
  h.auth_data = std::string(12, '\x5a');
  h.payload_length = 6;  // oracle: 3 fixed words + 12/4 mac words
  h.spi = 0x01020304;
  h.sequence = 0x0a0b0c0d;
  auto bytes = ipsec::encode_ah(h);
  CHECK(bytes.size() == 24);
  CHECK(bytes.size() / 4 == 6);
  // big-endian layout
  CHECK(static_cast<std::uint8_t>(bytes[0]) == 6);
  CHECK(static_cast<std::uint8_t>(bytes[1]) == 6);
  CHECK(bytes.substr(2, 2) == std::string("\0\0", 2));
  CHECK(bytes.substr(4, 4) == std::string("\x01\x02\x03\x04", 4));
  CHECK(bytes.substr(8, 4) == std::string("\x0a\x0b\x0c\x0d", 4));
  CHECK(ipsec::decode_ah(bytes) == h);
}

TEST_CASE("AH decode errors") {
  AhHeader h;
  h.auth_data = std::string(12, '\0');
  h.payload_length = 6;
  auto bytes = ipsec::encode_ah(h);

  auto expect = [](std::string_view b, Errc code) {
    try {
      ipsec::decode_ah(b);
      FAIL("decode should fail");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect(std::string_view(bytes).substr(0, 11), Errc::TruncatedHeader);
  auto reserved = bytes;
  reserved[3] = 0x01;
  expect(reserved, Errc::NonzeroReserved);
  auto wrong_len = bytes;
  wrong_len[1] = 7;
  expect(wrong_len, Errc::LengthMismatch);
  expect(bytes + "abcd", Errc::LengthMismatch);
}

TEST_CASE("property: AH codec round trip over generated headers") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    AhHeader h;
    h.next_header = static_cast<std::uint8_t>(rng());
    h.spi = static_cast<std::uint32_t>(rng());
    h.sequence = static_cast<std::uint32_t>(rng());
    const std::size_t words = rng() % 8;
    h.auth_data.resize(words * 4);
    for (auto& c : h.auth_data) c = static_cast<char>(rng());
    h.payload_length = static_cast<std::uint8_t>(3 + words);
    CHECK(ipsec::decode_ah(ipsec::encode_ah(h)) == h);
  }
}

TEST_CASE("ESP pad length matches brute force") {
  for (std::size_t block : {1u, 4u, 8u, 16u}) {
    for (std::size_t len = 0; len < 100; ++len) {
      std::size_t oracle = 0;
      while ((len + oracle + 2) % block != 0) ++oracle;
      CHECK(ipsec::esp_pad_length(len, block) == oracle);
    }
  }
  CHECK(ipsec::esp_pad_length(5, 4) == 1);
}

TEST_CASE("property: ESP codec round trip") {
  std::mt19937_64 rng(5);
  symcrypto::KeyFactory keys(5);
  for (int i = 0; i < 200; ++i) {
    EspPacket p;
    p.spi = static_cast<std::uint32_t>(rng());
    p.sequence = static_cast<std::uint32_t>(rng());
    p.payload = symcrypto::seal(keys.keygen_symmetric("e"), symcrypto::Term::plain(std::string(rng() % 40, 'z')));
    p.pad_length = static_cast<std::uint8_t>(rng() % 16);
    for (int j = 0; j < p.pad_length; ++j) p.padding += static_cast<char>(j + 1);
    p.next_header = proto::UDP;
    p.auth_data = std::string(12, static_cast<char>(rng()));
    CHECK(ipsec::decode_esp(ipsec::encode_esp(p)) == p);
  }
  CHECK_THROWS_AS(ipsec::decode_esp("short"), Error);
}
