#pragma once

// Wire units: frames carry IP datagrams, which carry transport units or
// IPsec-protected payloads. Every unit has a Term image so the symbolic
// secrecy analysis can look at exactly what a link carries.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "netsec/symcrypto.hpp"

namespace netsec {

using symcrypto::Term;

class IpAddr {
 public:
  constexpr IpAddr() = default;
  constexpr explicit IpAddr(std::uint32_t v) : value_(v) {}

  /// Dotted quad. Throws InvalidArgument.
  static IpAddr parse(std::string_view text);

  std::uint32_t value() const { return value_; }
  std::string to_string() const;
  /// RFC 1918 ranges.
  bool is_private() const;

  friend constexpr auto operator<=>(IpAddr, IpAddr) = default;

 private:
  std::uint32_t value_ = 0;
};

struct Prefix {
  IpAddr network;
  int len = 32;

  /// "10.0.0.0/8"; host bits are cleared.
  static Prefix parse(std::string_view text);
  static Prefix of(IpAddr addr, int len);

  std::uint32_t mask() const { return len == 0 ? 0u : ~0u << (32 - len); }
  bool contains(IpAddr a) const { return (a.value() & mask()) == network.value(); }
  IpAddr broadcast() const { return IpAddr(network.value() | ~mask()); }
  std::string to_string() const;

  friend auto operator<=>(const Prefix&, const Prefix&) = default;
};

/// An address assigned to a node together with its on-link prefix length.
struct IfAddr {
  IpAddr ip;
  int len = 24;
  Prefix prefix() const { return Prefix::of(ip, len); }
};

namespace proto {
inline constexpr std::uint8_t ICMP = 1;
inline constexpr std::uint8_t IPIP = 4;
inline constexpr std::uint8_t TCP = 6;
inline constexpr std::uint8_t UDP = 17;
inline constexpr std::uint8_t ESP = 50;
inline constexpr std::uint8_t AH = 51;
}  // namespace proto

namespace tcpflag {
inline constexpr std::uint8_t FIN = 0x01;
inline constexpr std::uint8_t SYN = 0x02;
inline constexpr std::uint8_t RST = 0x04;
inline constexpr std::uint8_t ACK = 0x10;
}  // namespace tcpflag

std::string render_flags(std::uint8_t flags);

struct TcpSegment {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  // carried and traced, never used for flow control
  std::uint16_t window = 65535;
  std::string data;

  bool has(std::uint8_t f) const { return (flags & f) != 0; }
  friend bool operator==(const TcpSegment&, const TcpSegment&) = default;
};

struct UdpDatagram {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Term data;
  friend bool operator==(const UdpDatagram&, const UdpDatagram&) = default;
};

struct IcmpMessage {
  static constexpr std::uint8_t kEchoRequest = 8;
  static constexpr std::uint8_t kEchoReply = 0;
  std::uint8_t type = kEchoRequest;
  std::uint8_t code = 0;
  std::uint16_t id = 0;
  std::uint16_t seq = 0;
  friend bool operator==(const IcmpMessage&, const IcmpMessage&) = default;
};

struct AhHeader {
  std::uint8_t next_header = 0;
  std::uint8_t payload_length = 0;
  std::uint16_t reserved = 0;
  std::uint32_t spi = 0;
  std::uint32_t sequence = 0;
  std::string auth_data;
  friend bool operator==(const AhHeader&, const AhHeader&) = default;
};

struct AhPacket {
  AhHeader header;
  Term inner;  // transport unit image
  friend bool operator==(const AhPacket&, const AhPacket&) = default;
};

struct EspPacket {
  std::uint32_t spi = 0;
  std::uint32_t sequence = 0;
  Term payload;  // Sealed(enc key, transport unit image)
  std::string padding;
  std::uint8_t pad_length = 0;
  std::uint8_t next_header = 0;
  std::string auth_data;
  friend bool operator==(const EspPacket&, const EspPacket&) = default;
};

using Payload = std::variant<TcpSegment, UdpDatagram, IcmpMessage, AhPacket, EspPacket, Term>;

struct IpDatagram {
  IpAddr src;
  IpAddr dst;
  std::uint8_t protocol = proto::UDP;
  std::uint8_t ttl = 64;
  Payload payload = Term();
  friend bool operator==(const IpDatagram&, const IpDatagram&) = default;
};

using HwAddr = std::array<std::uint8_t, 6>;
inline constexpr HwAddr kBroadcastHw{0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
std::string hw_to_string(const HwAddr& hw);

struct Frame {
  HwAddr src_hw{};
  HwAddr dst_hw{};
  IpDatagram dgram;
};

// Term images.
Term transport_to_term(const Payload& p);
/// Inverse of transport_to_term for TCP, UDP and ICMP. Throws InvalidArgument.
Payload term_to_transport(std::uint8_t protocol, const Term& t);
Term datagram_to_term(const IpDatagram& d);
IpDatagram term_to_datagram(const Term& t);

/// One-line human summary used in trace details.
std::string summarize(const IpDatagram& d);
std::string summarize_payload(std::uint8_t protocol, const Payload& p);

std::string to_hex(std::string_view bytes);
std::string from_hex(std::string_view hex);

}  // namespace netsec
