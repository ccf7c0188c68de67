#include "netsec/packet.hpp"

#include <charconv>
#include <sstream>
#include <vector>

#include "netsec/error.hpp"
#include "netsec/ipsec.hpp"

namespace netsec {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(Errc::InvalidArgument, "not a number: " + std::string(s));
  }
  return v;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (u < 0x20 || u >= 0x7f) {
      out += '.';
    } else {
      out += c;
    }
  }
  return out + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// Addresses

IpAddr IpAddr::parse(std::string_view text) {
  std::uint32_t v = 0;
  int parts = 0;
  std::size_t pos = 0;
  for (;;) {
    auto dot = text.find('.', pos);
    auto piece = text.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
    unsigned octet = 0;
    auto [p, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), octet);
    if (piece.empty() || ec != std::errc() || p != piece.data() + piece.size() || octet > 255 || ++parts > 4) {
      throw Error(Errc::InvalidArgument, "bad IPv4 address: " + std::string(text));
    }
    v = (v << 8) | octet;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  if (parts != 4) throw Error(Errc::InvalidArgument, "bad IPv4 address: " + std::string(text));
  return IpAddr(v);
}

std::string IpAddr::to_string() const {
  return std::to_string(value_ >> 24) + "." + std::to_string((value_ >> 16) & 0xff) + "." +
         std::to_string((value_ >> 8) & 0xff) + "." + std::to_string(value_ & 0xff);
}

bool IpAddr::is_private() const {
  return Prefix::parse("10.0.0.0/8").contains(*this) || Prefix::parse("172.16.0.0/12").contains(*this) ||
         Prefix::parse("192.168.0.0/16").contains(*this);
}

Prefix Prefix::of(IpAddr addr, int len) {
  if (len < 0 || len > 32) throw Error(Errc::InvalidArgument, "prefix length out of range");
  Prefix p;
  p.len = len;
  p.network = IpAddr(addr.value() & p.mask());
  return p;
}

Prefix Prefix::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) return of(IpAddr::parse(text), 32);
  return of(IpAddr::parse(text.substr(0, slash)), static_cast<int>(to_u64(text.substr(slash + 1))));
}

std::string Prefix::to_string() const { return network.to_string() + "/" + std::to_string(len); }

std::string hw_to_string(const HwAddr& hw) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < hw.size(); ++i) {
    if (i) out += ':';
    out += kHex[hw[i] >> 4];
    out += kHex[hw[i] & 0xf];
  }
  return out;
}

std::string render_flags(std::uint8_t flags) {
  std::string out;
  auto add = [&](std::uint8_t f, const char* name) {
    if (flags & f) {
      if (!out.empty()) out += '|';
      out += name;
    }
  };
  add(tcpflag::SYN, "SYN");
  add(tcpflag::ACK, "ACK");
  add(tcpflag::FIN, "FIN");
  add(tcpflag::RST, "RST");
  return out.empty() ? "-" : out;
}

std::string to_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out += kHex[c >> 4];
    out += kHex[c & 0xf];
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  if (hex.size() % 2) throw Error(Errc::InvalidArgument, "odd hex length");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::InvalidArgument, "bad hex digit");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out += static_cast<char>(nib(hex[i]) * 16 + nib(hex[i + 1]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Term images

Term transport_to_term(const Payload& p) {
  if (const auto* t = std::get_if<TcpSegment>(&p)) {
    std::ostringstream h;
    h << "tcp " << t->src_port << ' ' << t->dst_port << ' ' << t->seq << ' ' << t->ack << ' '
      << int(t->flags) << ' ' << t->window;
    return Term::pair(Term::plain(h.str()), Term::plain(t->data));
  }
  if (const auto* u = std::get_if<UdpDatagram>(&p)) {
    return Term::pair(Term::plain("udp " + std::to_string(u->src_port) + " " + std::to_string(u->dst_port)),
                      u->data);
  }
  if (const auto* i = std::get_if<IcmpMessage>(&p)) {
    std::ostringstream h;
    h << "icmp " << int(i->type) << ' ' << int(i->code) << ' ' << i->id << ' ' << i->seq;
    return Term::plain(h.str());
  }
  if (const auto* ah = std::get_if<AhPacket>(&p)) {
    return Term::pair(Term::plain("ah " + to_hex(ipsec::encode_ah(ah->header))), ah->inner);
  }
  if (const auto* esp = std::get_if<EspPacket>(&p)) {
    std::ostringstream h;
    h << "esp " << esp->spi << ' ' << esp->sequence << ' ' << to_hex(esp->padding) << "- "
      << int(esp->pad_length) << ' ' << int(esp->next_header) << ' ' << to_hex(esp->auth_data) << '-';
    return Term::pair(Term::plain(h.str()), esp->payload);
  }
  return std::get<Term>(p);
}

Payload term_to_transport(std::uint8_t protocol, const Term& t) {
  auto header_words = [](const Term& h, const char* tag, std::size_t n) {
    if (!h.is(Term::Kind::Plain)) throw Error(Errc::InvalidArgument, "transport header is not plain");
    auto w = split_ws(h.bytes());
    if (w.size() != n || w[0] != tag) throw Error(Errc::InvalidArgument, "malformed transport header");
    return w;
  };
  switch (protocol) {
    case proto::TCP: {
      if (!t.is(Term::Kind::Pair)) throw Error(Errc::InvalidArgument, "tcp image is not a pair");
      auto w = header_words(t.left(), "tcp", 7);
      TcpSegment s;
      s.src_port = static_cast<std::uint16_t>(to_u64(w[1]));
      s.dst_port = static_cast<std::uint16_t>(to_u64(w[2]));
      s.seq = static_cast<std::uint32_t>(to_u64(w[3]));
      s.ack = static_cast<std::uint32_t>(to_u64(w[4]));
      s.flags = static_cast<std::uint8_t>(to_u64(w[5]));
      s.window = static_cast<std::uint16_t>(to_u64(w[6]));
      if (!t.right().is(Term::Kind::Plain)) throw Error(Errc::InvalidArgument, "tcp data is not plain");
      s.data = t.right().bytes();
      return s;
    }
    case proto::UDP: {
      if (!t.is(Term::Kind::Pair)) throw Error(Errc::InvalidArgument, "udp image is not a pair");
      auto w = header_words(t.left(), "udp", 3);
      UdpDatagram u;
      u.src_port = static_cast<std::uint16_t>(to_u64(w[1]));
      u.dst_port = static_cast<std::uint16_t>(to_u64(w[2]));
      u.data = t.right();
      return u;
    }
    case proto::ICMP: {
      auto w = header_words(t, "icmp", 5);
      IcmpMessage m;
      m.type = static_cast<std::uint8_t>(to_u64(w[1]));
      m.code = static_cast<std::uint8_t>(to_u64(w[2]));
      m.id = static_cast<std::uint16_t>(to_u64(w[3]));
      m.seq = static_cast<std::uint16_t>(to_u64(w[4]));
      return m;
    }
    case proto::AH: {
      if (!t.is(Term::Kind::Pair)) throw Error(Errc::InvalidArgument, "ah image is not a pair");
      auto w = header_words(t.left(), "ah", 2);
      return AhPacket{ipsec::decode_ah(from_hex(w[1])), t.right()};
    }
    case proto::ESP: {
      if (!t.is(Term::Kind::Pair)) throw Error(Errc::InvalidArgument, "esp image is not a pair");
      auto w = header_words(t.left(), "esp", 7);
      EspPacket e;
      e.spi = static_cast<std::uint32_t>(to_u64(w[1]));
      e.sequence = static_cast<std::uint32_t>(to_u64(w[2]));
      e.padding = from_hex(std::string_view(w[3]).substr(0, w[3].size() - 1));
      e.pad_length = static_cast<std::uint8_t>(to_u64(w[4]));
      e.next_header = static_cast<std::uint8_t>(to_u64(w[5]));
      e.auth_data = from_hex(std::string_view(w[6]).substr(0, w[6].size() - 1));
      e.payload = t.right();
      return e;
    }
    default: return t;
  }
}

Term datagram_to_term(const IpDatagram& d) {
  std::ostringstream h;
  h << "ip " << d.src.to_string() << ' ' << d.dst.to_string() << ' ' << int(d.protocol) << ' ' << int(d.ttl);
  return Term::pair(Term::plain(h.str()), transport_to_term(d.payload));
}

IpDatagram term_to_datagram(const Term& t) {
  if (!t.is(Term::Kind::Pair) || !t.left().is(Term::Kind::Plain)) {
    throw Error(Errc::InvalidArgument, "not a datagram image");
  }
  auto w = split_ws(t.left().bytes());
  if (w.size() != 5 || w[0] != "ip") throw Error(Errc::InvalidArgument, "malformed datagram header");
  IpDatagram d;
  d.src = IpAddr::parse(w[1]);
  d.dst = IpAddr::parse(w[2]);
  d.protocol = static_cast<std::uint8_t>(to_u64(w[3]));
  d.ttl = static_cast<std::uint8_t>(to_u64(w[4]));
  d.payload = term_to_transport(d.protocol, t.right());
  return d;
}

// ---------------------------------------------------------------------------
// Summaries

std::string summarize_payload(std::uint8_t protocol, const Payload& p) {
  std::ostringstream o;
  if (const auto* t = std::get_if<TcpSegment>(&p)) {
    o << "tcp " << t->src_port << '>' << t->dst_port << " seq=" << t->seq << " ack=" << t->ack
      << " flags=" << render_flags(t->flags) << " win=" << t->window << " len=" << t->data.size();
    if (!t->data.empty()) o << " data=" << quote(t->data);
  } else if (const auto* u = std::get_if<UdpDatagram>(&p)) {
    o << "udp " << u->src_port << '>' << u->dst_port << ' ' << u->data.render();
  } else if (const auto* i = std::get_if<IcmpMessage>(&p)) {
    o << "icmp ";
    if (i->type == IcmpMessage::kEchoRequest) o << "echo-request";
    else if (i->type == IcmpMessage::kEchoReply) o << "echo-reply";
    else o << "type=" << int(i->type);
    o << " id=" << i->id << " seq=" << i->seq;
  } else if (const auto* ah = std::get_if<AhPacket>(&p)) {
    o << "ah spi=" << ah->header.spi << " seq=" << ah->header.sequence << " hdr=" << to_hex(ipsec::encode_ah(ah->header))
      << " | ";
    try {
      o << summarize_payload(ah->header.next_header, term_to_transport(ah->header.next_header, ah->inner));
    } catch (const Error&) {
      o << ah->inner.render();
    }
  } else if (const auto* esp = std::get_if<EspPacket>(&p)) {
    o << "esp spi=" << esp->spi << " seq=" << esp->sequence << " pad=" << int(esp->pad_length)
      << " nh=" << int(esp->next_header) << ' ' << esp->payload.render();
  } else {
    o << "proto=" << int(protocol) << ' ' << std::get<Term>(p).render();
  }
  return o.str();
}

std::string summarize(const IpDatagram& d) {
  std::ostringstream o;
  o << "ip " << d.src.to_string() << '>' << d.dst.to_string() << " proto=" << int(d.protocol)
    << " ttl=" << int(d.ttl) << " | " << summarize_payload(d.protocol, d.payload);
  return o.str();
}

}  // namespace netsec
