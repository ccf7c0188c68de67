#include "netsec/ipsec.hpp"

#include <algorithm>
#include <sstream>

#include "netsec/error.hpp"

namespace netsec::ipsec {

using symcrypto::Term;

std::string_view to_string(Direction d) { return d == Direction::Inbound ? "inbound" : "outbound"; }
std::string_view to_string(Protocol p) { return p == Protocol::AH ? "AH" : "ESP"; }

// ---------------------------------------------------------------------------
// SADB

void Sadb::add(SecurityAssociation sa) {
  auto key = std::make_pair(sa.spi, sa.partner_ip.value());
  if (entries_.count(key)) {
    throw Error(Errc::InvalidArgument, "duplicate SA spi=" + std::to_string(sa.spi) + " partner=" +
                                           sa.partner_ip.to_string());
  }
  entries_.emplace(key, std::move(sa));
  order_.push_back(key);
}

SecurityAssociation* Sadb::find(std::uint32_t spi, IpAddr partner) {
  auto it = entries_.find({spi, partner.value()});
  return it == entries_.end() ? nullptr : &it->second;
}

const SecurityAssociation* Sadb::find(std::uint32_t spi, IpAddr partner) const {
  auto it = entries_.find({spi, partner.value()});
  return it == entries_.end() ? nullptr : &it->second;
}

SecurityAssociation* Sadb::outbound_for(IpAddr partner) {
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& sa = entries_.at(*it);
    if (sa.direction == Direction::Outbound && sa.partner_ip == partner) return &sa;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Codecs

namespace {

void put16(std::string& o, std::uint16_t v) {
  o += static_cast<char>(v >> 8);
  o += static_cast<char>(v & 0xff);
}
void put32(std::string& o, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) o += static_cast<char>((v >> s) & 0xff);
}
std::uint16_t get16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>((static_cast<std::uint8_t>(b[at]) << 8) | static_cast<std::uint8_t>(b[at + 1]));
}
std::uint32_t get32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(b[at + i]);
  return v;
}

std::size_t padded_mac_len(std::size_t n) { return (n + 3) / 4 * 4; }

std::string mac_bytes(const Key& k, const Term& input, std::size_t n) {
  auto image = symcrypto::fingerprint(symcrypto::mac(k, input), n);
  image.resize(padded_mac_len(n), '\0');  // the HMAC is padded to a word multiple
  return image;
}

Term esp_mac_input(const EspPacket& p) {
  std::string fixed;
  put32(fixed, p.spi);
  put32(fixed, p.sequence);
  std::string trailer = p.padding;
  trailer += static_cast<char>(p.pad_length);
  trailer += static_cast<char>(p.next_header);
  return Term::tuple({Term::plain(fixed), p.payload, Term::plain(trailer)});
}

}  // namespace

std::string encode_ah(const AhHeader& h) {
  if (h.reserved != 0) throw Error(Errc::NonzeroReserved, "reserved field must be zero");
  if (h.auth_data.size() % 4 != 0 || h.payload_length != 3 + h.auth_data.size() / 4) {
    throw Error(Errc::LengthMismatch, "payload_length " + std::to_string(h.payload_length) + " vs " +
                                          std::to_string(h.auth_data.size()) + " auth bytes");
  }
  std::string o;
  o += static_cast<char>(h.next_header);
  o += static_cast<char>(h.payload_length);
  put16(o, h.reserved);
  put32(o, h.spi);
  put32(o, h.sequence);
  o += h.auth_data;
  return o;
}

AhHeader decode_ah(std::string_view b) {
  if (b.size() < 12) throw Error(Errc::TruncatedHeader, "AH needs 12 bytes, got " + std::to_string(b.size()));
  AhHeader h;
  h.next_header = static_cast<std::uint8_t>(b[0]);
  h.payload_length = static_cast<std::uint8_t>(b[1]);
  h.reserved = get16(b, 2);
  if (h.reserved != 0) throw Error(Errc::NonzeroReserved, "reserved=" + std::to_string(h.reserved));
  h.spi = get32(b, 4);
  h.sequence = get32(b, 8);
  if (h.payload_length < 3 || std::size_t(h.payload_length) * 4 != b.size()) {
    throw Error(Errc::LengthMismatch, "payload_length " + std::to_string(h.payload_length) + " words vs " +
                                          std::to_string(b.size()) + " bytes");
  }
  h.auth_data = std::string(b.substr(12));
  return h;
}

std::string encode_esp(const EspPacket& p) {
  if (p.padding.size() != p.pad_length) throw Error(Errc::LengthMismatch, "pad_length disagrees with padding");
  std::string o;
  put32(o, p.spi);
  put32(o, p.sequence);
  o += symcrypto::serialize(p.payload);
  o += p.padding;
  o += static_cast<char>(p.pad_length);
  o += static_cast<char>(p.next_header);
  o += p.auth_data;
  return o;
}

EspPacket decode_esp(std::string_view b, std::size_t auth_len) {
  if (b.size() < 8 + 2 + auth_len) throw Error(Errc::TruncatedHeader, "ESP too short");
  EspPacket p;
  p.spi = get32(b, 0);
  p.sequence = get32(b, 4);
  std::size_t pos = 8;
  auto body = b.substr(0, b.size() - auth_len);
  p.payload = symcrypto::deserialize(body, pos);
  if (pos + 2 > body.size()) throw Error(Errc::TruncatedHeader, "ESP trailer missing");
  const std::size_t pad = body.size() - pos - 2;
  p.padding = std::string(body.substr(pos, pad));
  p.pad_length = static_cast<std::uint8_t>(body[pos + pad]);
  p.next_header = static_cast<std::uint8_t>(body[pos + pad + 1]);
  if (p.pad_length != pad) {
    throw Error(Errc::LengthMismatch, "pad_length " + std::to_string(p.pad_length) + " vs " + std::to_string(pad));
  }
  p.auth_data = std::string(b.substr(b.size() - auth_len));
  return p;
}

std::uint8_t esp_pad_length(std::size_t payload_len, std::size_t block) {
  if (block == 0 || block > 256) throw Error(Errc::InvalidArgument, "bad block size");
  return static_cast<std::uint8_t>((block - (payload_len + 2) % block) % block);
}

// ---------------------------------------------------------------------------
// AH

Term ah_mac_input(const IpDatagram& outer, const AhHeader& zeroed, const Term& inner) {
  // every outer field except ttl, which routers change in transit
  std::string fixed;
  put32(fixed, outer.src.value());
  put32(fixed, outer.dst.value());
  fixed += static_cast<char>(outer.protocol);
  return Term::tuple({Term::plain(fixed), Term::plain(encode_ah(zeroed)), inner});
}

namespace {

void check_outbound(const SecurityAssociation& sa, Protocol want, std::uint64_t now) {
  if (sa.direction != Direction::Outbound) throw Error(Errc::InvalidArgument, "protect needs an outbound SA");
  if (sa.protocol != want) throw Error(Errc::InvalidArgument, "SA protocol mismatch");
  if (sa.expired(now)) throw Error(Errc::SaExpired, "spi=" + std::to_string(sa.spi));
}

SecurityAssociation& lookup_inbound(Sadb& sadb, std::uint32_t spi, IpAddr src, Protocol want, std::uint64_t now) {
  auto* sa = sadb.find(spi, src);
  if (!sa || sa->direction != Direction::Inbound || sa->protocol != want) {
    throw Error(Errc::UnknownSpi, "spi=" + std::to_string(spi) + " partner=" + src.to_string());
  }
  if (sa->expired(now)) throw Error(Errc::SaExpired, "spi=" + std::to_string(spi));
  return *sa;
}

void check_replay(SecurityAssociation& sa, std::uint32_t seq) {
  if (!sa.replay_window.insert(seq).second) throw Error(Errc::ReplayedSeq, "seq=" + std::to_string(seq));
}

}  // namespace

IpDatagram ah_protect(SecurityAssociation& sa, const IpDatagram& d, std::uint64_t now) {
  check_outbound(sa, Protocol::AH, now);
  IpDatagram out;
  out.src = d.src;
  out.dst = d.dst;
  out.protocol = proto::AH;
  out.ttl = d.ttl;
  AhHeader h;
  h.next_header = d.protocol;
  h.spi = sa.spi;
  h.sequence = ++sa.seq;
  h.auth_data.assign(padded_mac_len(sa.mac_bytes), '\0');
  h.payload_length = static_cast<std::uint8_t>(3 + h.auth_data.size() / 4);
  auto inner = transport_to_term(d.payload);
  h.auth_data = mac_bytes(sa.hmac_key, ah_mac_input(out, h, inner), sa.mac_bytes);
  out.payload = AhPacket{h, inner};
  return out;
}

IpDatagram ah_verify(Sadb& sadb, const IpDatagram& d, std::uint64_t now) {
  const auto* ah = std::get_if<AhPacket>(&d.payload);
  if (d.protocol != proto::AH || !ah) throw Error(Errc::InvalidArgument, "not an AH datagram");
  auto& sa = lookup_inbound(sadb, ah->header.spi, d.src, Protocol::AH, now);
  AhHeader zeroed = ah->header;
  std::fill(zeroed.auth_data.begin(), zeroed.auth_data.end(), '\0');
  std::string expect;
  try {
    expect = mac_bytes(sa.hmac_key, ah_mac_input(d, zeroed, ah->inner), sa.mac_bytes);
  } catch (const Error&) {
    throw Error(Errc::BadMac, "malformed AH header");
  }
  if (expect != ah->header.auth_data) throw Error(Errc::BadMac, "spi=" + std::to_string(sa.spi));
  check_replay(sa, ah->header.sequence);
  IpDatagram inner;
  inner.src = d.src;
  inner.dst = d.dst;
  inner.protocol = ah->header.next_header;
  inner.ttl = d.ttl;
  inner.payload = term_to_transport(inner.protocol, ah->inner);
  return inner;
}

// ---------------------------------------------------------------------------
// ESP

IpDatagram esp_protect(SecurityAssociation& sa, const IpDatagram& d, std::uint64_t now) {
  check_outbound(sa, Protocol::ESP, now);
  if (!sa.enc_key) throw Error(Errc::InvalidArgument, "ESP SA without an encryption key");
  EspPacket p;
  p.spi = sa.spi;
  p.sequence = ++sa.seq;
  p.payload = symcrypto::seal(*sa.enc_key, transport_to_term(d.payload));
  p.pad_length = esp_pad_length(symcrypto::serialize(p.payload).size(), sa.block);
  for (std::uint8_t i = 1; i <= p.pad_length; ++i) p.padding += static_cast<char>(i);
  p.next_header = d.protocol;
  p.auth_data = mac_bytes(sa.hmac_key, esp_mac_input(p), sa.mac_bytes);
  IpDatagram out;
  out.src = d.src;
  out.dst = d.dst;
  out.protocol = proto::ESP;
  out.ttl = d.ttl;
  out.payload = p;
  return out;
}

IpDatagram esp_open(Sadb& sadb, const IpDatagram& d, std::uint64_t now) {
  const auto* p = std::get_if<EspPacket>(&d.payload);
  if (d.protocol != proto::ESP || !p) throw Error(Errc::InvalidArgument, "not an ESP datagram");
  auto& sa = lookup_inbound(sadb, p->spi, d.src, Protocol::ESP, now);
  if (mac_bytes(sa.hmac_key, esp_mac_input(*p), sa.mac_bytes) != p->auth_data) {
    throw Error(Errc::BadMac, "spi=" + std::to_string(sa.spi));
  }
  check_replay(sa, p->sequence);
  if (!sa.enc_key) throw Error(Errc::KeyMismatch, "inbound SA has no encryption key");
  auto body = symcrypto::open(*sa.enc_key, p->payload);
  IpDatagram inner;
  inner.src = d.src;
  inner.dst = d.dst;
  inner.protocol = p->next_header;
  inner.ttl = d.ttl;
  inner.payload = term_to_transport(inner.protocol, body);
  return inner;
}

// ---------------------------------------------------------------------------
// VPN

IpDatagram vpn_encapsulate(const Tunnel& t, const IpDatagram& inner) {
  if (t.local_public.is_private() || t.peer_public.is_private()) {
    throw Error(Errc::NoPublicAddress, "tunnel " + t.name + " endpoints must be public");
  }
  if (!t.allow_public_inner && (!inner.src.is_private() || !inner.dst.is_private())) {
    throw Error(Errc::NoPublicAddress, "inner datagram is not private-to-private");
  }
  IpDatagram outer;
  outer.src = t.local_public;
  outer.dst = t.peer_public;
  outer.protocol = proto::IPIP;
  outer.ttl = 64;
  outer.payload = symcrypto::seal(t.key, datagram_to_term(inner));
  return outer;
}

IpDatagram vpn_decapsulate(const IpDatagram& outer, const Key& key, IpAddr own_public) {
  const auto* body = std::get_if<Term>(&outer.payload);
  if (outer.protocol != proto::IPIP || !body || outer.dst != own_public) {
    throw Error(Errc::NotTunneled, "protocol=" + std::to_string(outer.protocol) + " dst=" + outer.dst.to_string());
  }
  return term_to_datagram(symcrypto::open(key, *body));
}

// ---------------------------------------------------------------------------
// IKE and SA negotiation

AlgorithmRanks default_ranks() {
  return {{"hmac-md5", 1},  {"hmac-sha1", 2}, {"hmac-sha256", 3}, {"des", 1},      {"3des", 2},
          {"aes128", 3},    {"aes256", 4},    {"kdf-sha1", 1},    {"kdf-sha256", 2}};
}

IpsecEndpoint make_endpoint(const std::string& name, IpAddr ip, symcrypto::KeyFactory& keys, const std::string& ca,
                            const std::set<std::string>& trusted_cas) {
  IpsecEndpoint e;
  e.name = name;
  e.ip = ip;
  e.keys = keys.keygen_pair(name);
  e.cert = symcrypto::cert_issue(ca, name, e.keys.pub);
  e.trust.trusted_issuers = trusted_cas;
  return e;
}

namespace {

Key accept_cert(const IpsecEndpoint& verifier, const std::string& expected_subject, const std::optional<Term>& got) {
  if (!got || !got->is(Term::Kind::Cert)) throw Error(Errc::CertRejected, "no certificate from " + expected_subject);
  if (!symcrypto::cert_verify(verifier.trust, *got) || got->cert_subject() != expected_subject) {
    throw Error(Errc::CertRejected, verifier.name + " rejects " + got->render());
  }
  return got->cert_key();
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out.empty() ? "-" : out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s == "-") return out;
  std::istringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::map<std::string, std::string> fields(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  for (std::string w; in >> w;) {
    auto eq = w.find('=');
    if (eq == std::string::npos) out[w] = "";
    else out[w.substr(0, eq)] = w.substr(eq + 1);
  }
  return out;
}

std::string pick(const std::vector<std::string>& offered, const AlgorithmRanks& ranks,
                 const std::set<std::string>& supported) {
  std::optional<std::string> best;
  int best_rank = 0;
  for (const auto& alg : offered) {
    if (!supported.empty() && !supported.count(alg)) continue;
    auto it = ranks.find(alg);
    const int r = it == ranks.end() ? 0 : it->second;
    if (!best || r > best_rank || (r == best_rank && alg < *best)) {
      best = alg;
      best_rank = r;
    }
  }
  if (!best) throw Error(Errc::EmptyProposal, "no acceptable algorithm among " + join(offered));
  return *best;
}

Term open_for(const IpsecEndpoint& e, const std::optional<Term>& got, const char* what) {
  if (!got) throw Error(Errc::NoIkeSa, std::string(what) + " lost in transit");
  return symcrypto::open(e.keys.prv, *got);
}

}  // namespace

void ike_establish(IpsecEndpoint& a, IpsecEndpoint& b, Channel& ch) {
  auto to_b = ch.deliver(a.name, b.name, "ike-cert", a.cert);
  auto a_key = accept_cert(b, a.name, to_b);
  auto to_a = ch.deliver(b.name, a.name, "ike-cert", b.cert);
  auto b_key = accept_cert(a, b.name, to_a);
  b.ike_peers[a.name] = a_key;
  a.ike_peers[b.name] = b_key;
  ch.note(a.name, "ike-sa " + a.name + "<->" + b.name);
}

Selection select_algorithms(const Proposal& p, const AlgorithmRanks& ranks, const std::set<std::string>& supported) {
  if (p.hmacs.empty()) throw Error(Errc::EmptyProposal, "no HMAC algorithms proposed");
  Selection s;
  s.hmac = pick(p.hmacs, ranks, supported);
  if (p.protocol == Protocol::ESP) {
    if (p.ciphers.empty() || p.kdfs.empty()) throw Error(Errc::EmptyProposal, "ESP needs ciphers and kdfs");
    s.cipher = pick(p.ciphers, ranks, supported);
    s.kdf = pick(p.kdfs, ranks, supported);
  }
  return s;
}

SaPair sa_establish(IpsecEndpoint& a, IpsecEndpoint& b, const Proposal& p, const AlgorithmRanks& ranks,
                    symcrypto::KeyFactory& keys, Channel& ch) {
  if (!a.ike_peers.count(b.name) || !b.ike_peers.count(a.name)) {
    throw Error(Errc::NoIkeSa, a.name + "<->" + b.name);
  }
  if (p.hmacs.empty() || (p.protocol == Protocol::ESP && (p.ciphers.empty() || p.kdfs.empty()))) {
    throw Error(Errc::EmptyProposal, "incomplete proposal");
  }

  // a picks an SPI it has not used with b yet
  auto& counter = a.next_spi.try_emplace(b.name, kFirstSpi).first->second;
  std::uint64_t spi = counter;
  while (spi <= a.spi_limit && a.sadb.contains_spi(static_cast<std::uint32_t>(spi), b.ip)) ++spi;
  if (spi > a.spi_limit || spi < kFirstSpi) throw Error(Errc::SpiExhausted, a.name + " towards " + b.name);
  counter = static_cast<std::uint32_t>(spi + 1);

  auto share = [&](const std::string& who) {
    auto secret = keys.keygen_symmetric("dh-" + who);
    return Term::plain("dh-share " + secret.owner + "#" + std::to_string(secret.serial) + " " +
                       std::to_string(secret.tag));
  };
  const Term a_share = share(a.name);
  std::ostringstream prop;
  prop << "sa-propose proto=" << to_string(p.protocol) << " spi=" << spi << " life=" << p.lifespan
       << " hmacs=" << join(p.hmacs) << " ciphers=" << join(p.ciphers) << " kdfs=" << join(p.kdfs);
  auto m1 = symcrypto::seal(a.ike_peers.at(b.name), Term::pair(Term::plain(prop.str()), a_share));
  auto got1 = open_for(b, ch.deliver(a.name, b.name, "sa-propose", m1), "proposal");
  if (!got1.is(Term::Kind::Pair) || !got1.left().is(Term::Kind::Plain)) {
    throw Error(Errc::EmptyProposal, "malformed proposal");
  }

  // responder side works only from what arrived
  auto f = fields(got1.left().bytes());
  Proposal seen;
  seen.protocol = f["proto"] == "AH" ? Protocol::AH : Protocol::ESP;
  seen.hmacs = split_list(f["hmacs"]);
  seen.ciphers = split_list(f["ciphers"]);
  seen.kdfs = split_list(f["kdfs"]);
  seen.lifespan = std::stoull(f["life"]);
  const auto sel = select_algorithms(seen, ranks, b.supported);
  const auto lifespan = std::min(seen.lifespan, b.lifespan_cap);
  const Term b_share = share(b.name);
  std::ostringstream acc;
  acc << "sa-accept spi=" << f["spi"] << " hmac=" << sel.hmac << " cipher=" << sel.cipher.value_or("-")
      << " kdf=" << sel.kdf.value_or("-") << " life=" << lifespan;
  auto m2 = symcrypto::seal(b.ike_peers.at(a.name), Term::pair(Term::plain(acc.str()), b_share));
  auto got2 = open_for(a, ch.deliver(b.name, a.name, "sa-accept", m2), "acceptance");
  if (!got2.is(Term::Kind::Pair)) throw Error(Errc::EmptyProposal, "malformed acceptance");

  const Key session_a = symcrypto::dh_agree(a_share, got2.right());
  const Key session_b = symcrypto::dh_agree(got1.right(), b_share);

  SecurityAssociation in;
  in.spi = static_cast<std::uint32_t>(spi);
  in.partner_ip = b.ip;
  in.direction = Direction::Inbound;
  in.protocol = seen.protocol;
  in.hmac_alg = sel.hmac;
  in.hmac_key = session_a;
  in.established = ch.now();
  in.lifespan = lifespan;
  SecurityAssociation out = in;
  out.partner_ip = a.ip;
  out.direction = Direction::Outbound;
  out.hmac_key = session_b;
  if (seen.protocol == Protocol::ESP) {
    in.enc_alg = out.enc_alg = sel.cipher;
    in.enc_key = symcrypto::kdf(session_a);
    out.enc_key = symcrypto::kdf(session_b);
  }
  a.sadb.add(in);
  b.sadb.add(out);
  ch.note(a.name, "sa-established spi=" + std::to_string(spi) + " " + std::string(to_string(seen.protocol)) +
                      " hmac=" + sel.hmac + " " + b.name + "->" + a.name);
  return {in, out};
}

}  // namespace netsec::ipsec
