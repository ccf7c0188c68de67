#pragma once

// IPsec (AH / ESP, security associations, IKE-style certificate exchange) and
// IP-in-IP VPN tunneling.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netsec/channel.hpp"
#include "netsec/packet.hpp"
#include "netsec/symcrypto.hpp"

namespace netsec::ipsec {

using symcrypto::Key;

enum class Direction { Inbound, Outbound };
enum class Protocol { AH, ESP };
std::string_view to_string(Direction d);
std::string_view to_string(Protocol p);

inline constexpr std::size_t kDefaultMacBytes = 12;
inline constexpr std::size_t kDefaultBlock = 4;
inline constexpr std::uint64_t kDefaultLifespan = 1000;
inline constexpr std::uint32_t kFirstSpi = 256;

struct SecurityAssociation {
  std::uint32_t spi = 0;
  IpAddr partner_ip;
  Direction direction = Direction::Inbound;
  Protocol protocol = Protocol::AH;
  std::string hmac_alg;
  Key hmac_key;
  std::optional<std::string> enc_alg;
  std::optional<Key> enc_key;
  std::optional<std::string> iv;  // listed as an SA parameter; symbolic sealing never uses it
  std::uint64_t established = 0;
  std::uint64_t lifespan = kDefaultLifespan;
  std::uint32_t seq = 0;
  std::set<std::uint32_t> replay_window;
  std::size_t mac_bytes = kDefaultMacBytes;
  std::size_t block = kDefaultBlock;

  bool expired(std::uint64_t now) const { return now > established + lifespan; }
};

/// Indexed by (spi, partner ip).
class Sadb {
 public:
  /// Throws InvalidArgument on a duplicate index.
  void add(SecurityAssociation sa);
  SecurityAssociation* find(std::uint32_t spi, IpAddr partner);
  const SecurityAssociation* find(std::uint32_t spi, IpAddr partner) const;
  /// Most recently added outbound SA towards `partner`.
  SecurityAssociation* outbound_for(IpAddr partner);
  bool contains_spi(std::uint32_t spi, IpAddr partner) const { return find(spi, partner) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::pair<std::uint32_t, std::uint32_t>, SecurityAssociation>& entries() const { return entries_; }

 private:
  std::map<std::pair<std::uint32_t, std::uint32_t>, SecurityAssociation> entries_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order_;
};

// Codecs. Big-endian, field order as in the AH / ESP header drawings.
std::string encode_ah(const AhHeader& h);
/// Throws TruncatedHeader, NonzeroReserved, LengthMismatch.
AhHeader decode_ah(std::string_view bytes);
std::string encode_esp(const EspPacket& p);
/// Throws TruncatedHeader, LengthMismatch.
EspPacket decode_esp(std::string_view bytes, std::size_t auth_len = kDefaultMacBytes);

/// Smallest p with (payload_len + p + 2) % block == 0.
std::uint8_t esp_pad_length(std::size_t payload_len, std::size_t block = kDefaultBlock);

// Protection. Protect functions throw SaExpired and InvalidArgument (wrong
// direction); verify/open throw UnknownSpi, SaExpired, BadMac, ReplayedSeq,
// and for ESP also KeyMismatch. On success they return the inner datagram.
IpDatagram ah_protect(SecurityAssociation& sa, const IpDatagram& d, std::uint64_t now);
IpDatagram ah_verify(Sadb& sadb, const IpDatagram& d, std::uint64_t now);
IpDatagram esp_protect(SecurityAssociation& sa, const IpDatagram& d, std::uint64_t now);
IpDatagram esp_open(Sadb& sadb, const IpDatagram& d, std::uint64_t now);

/// The bytes the AH mac is computed over; exposed for tests.
Term ah_mac_input(const IpDatagram& outer, const AhHeader& zeroed, const Term& inner);

// VPN
struct Tunnel {
  std::string name;
  IpAddr local_public;
  IpAddr peer_public;
  Prefix remote_private;
  Key key;
  bool allow_public_inner = false;
};

/// Throws NoPublicAddress.
IpDatagram vpn_encapsulate(const Tunnel& t, const IpDatagram& inner);
/// Throws NotTunneled, KeyMismatch.
IpDatagram vpn_decapsulate(const IpDatagram& outer, const Key& key, IpAddr own_public);

// IKE and SA negotiation
using AlgorithmRanks = std::map<std::string, int>;
AlgorithmRanks default_ranks();

struct IpsecEndpoint {
  std::string name;
  IpAddr ip;
  symcrypto::KeyPair keys;
  Term cert;
  symcrypto::TrustStore trust;
  Sadb sadb;
  std::map<std::string, Key> ike_peers;  // peer name -> peer public key
  std::map<std::string, std::uint32_t> next_spi;
  std::uint32_t spi_limit = 0xffffffffu;
  std::uint64_t lifespan_cap = kDefaultLifespan;
  // empty = every ranked algorithm is acceptable
  std::set<std::string> supported;
};

/// Issues a key pair and a certificate from `ca` for `name`.
IpsecEndpoint make_endpoint(const std::string& name, IpAddr ip, symcrypto::KeyFactory& keys, const std::string& ca,
                            const std::set<std::string>& trusted_cas);

/// Mutual certificate exchange. Throws CertRejected. Idempotent.
void ike_establish(IpsecEndpoint& a, IpsecEndpoint& b, Channel& ch);

struct Proposal {
  Protocol protocol = Protocol::ESP;
  std::vector<std::string> hmacs;
  std::vector<std::string> ciphers;
  std::vector<std::string> kdfs;
  std::uint64_t lifespan = kDefaultLifespan;
};

struct Selection {
  std::string hmac;
  std::optional<std::string> cipher;
  std::optional<std::string> kdf;
};

/// Responder choice: the max-rank entry of each list (ties: lexicographically first).
Selection select_algorithms(const Proposal& p, const AlgorithmRanks& ranks, const std::set<std::string>& supported);

struct SaPair {
  SecurityAssociation inbound_at_initiator;
  SecurityAssociation outbound_at_responder;
};

/// Negotiates one SA carrying traffic from b to a. The SPI is picked by a and
/// the SA is installed inbound at a and outbound at b. Throws NoIkeSa,
/// EmptyProposal, SpiExhausted.
SaPair sa_establish(IpsecEndpoint& a, IpsecEndpoint& b, const Proposal& p, const AlgorithmRanks& ranks,
                    symcrypto::KeyFactory& keys, Channel& ch);

}  // namespace netsec::ipsec
