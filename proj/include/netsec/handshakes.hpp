#pragma once

// SSH, TLS and Kerberos as explicit message sequences over a Channel. Every
// message is a symbolic term; what the receiver acts on is what arrived.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "netsec/channel.hpp"
#include "netsec/packet.hpp"
#include "netsec/symcrypto.hpp"

namespace netsec::handshakes {

using symcrypto::Key;
using symcrypto::KeyFactory;
using symcrypto::KeyPair;
using symcrypto::TrustStore;

// ---------------------------------------------------------------------------
// SSH

enum class SshPhase { Identify, Negotiate, Authenticate, Ready };
std::string_view to_string(SshPhase p);

struct RankedAlg {
  std::string name;
  int rank = 0;
};

/// Highest-ranked offered algorithm the server supports; ties go to the
/// lexicographically smaller name.
std::optional<std::string> choose_algorithm(const std::vector<RankedAlg>& offered,
                                            const std::set<std::string>& supported);

struct SshClient {
  std::string name;
  KeyPair host_keys;
  TrustStore store;
  bool accept_unknown = false;
  std::vector<RankedAlg> offered;
  std::string username;
  std::string password;
};

struct SshServer {
  std::string name;
  KeyPair host_keys;
  std::set<std::string> supported;
  std::map<std::string, Key> credentials;   // username -> password_key(username, password)
  std::map<std::string, Key> known_clients; // client host -> public host key

  void add_user(const std::string& user, const std::string& password);
};

struct SshSession {
  SshPhase phase = SshPhase::Identify;
  std::optional<Key> server_key;      // host key the client accepted
  bool peer_verified = false;         // server key was already pinned
  bool client_verified = false;       // reverse challenge passed
  std::string chosen_alg;
  std::optional<Key> session_key;     // client side
  std::optional<Key> server_session_key;
  std::string user;
};

/// Host key check, then the optional reverse challenge. Throws HostKeyRejected,
/// ChallengeFailed.
void ssh_identify(SshClient& c, SshServer& s, Channel& ch, SshSession& session);
/// Throws NoCommonAlgorithm, HostKeyRejected.
void ssh_negotiate(SshClient& c, SshServer& s, Channel& ch, KeyFactory& keys, SshSession& session);
/// Throws BadCredentials, HostKeyRejected.
void ssh_authenticate(SshClient& c, SshServer& s, Channel& ch, SshSession& session);
/// All three phases.
SshSession ssh_connect(SshClient& c, SshServer& s, Channel& ch, KeyFactory& keys);

// ---------------------------------------------------------------------------
// TLS

/// Versions are written as 10, 11, 12, 13 for v1.0 .. v1.3.
std::string version_name(int v);

struct TlsEndpoint {
  std::string name;
  int min_version = 10;
  int max_version = 12;
  std::vector<std::string> suites;  // client: preference order; server: supported
  KeyPair keys;
  Term cert;
  TrustStore store;
};

struct TlsSession {
  int version = 0;
  std::uint32_t client_random = 0;
  std::uint32_t server_random = 0;
  std::string cipher_suite;
  std::optional<Key> session_key;
  std::pair<bool, bool> finished_ok{false, false};  // (server checked client, client checked server)
  bool mutual = false;
};

/// Throws VersionMismatch, NoCommonSuite, CertRejected, FinishedMismatch.
TlsSession tls_handshake(TlsEndpoint& client, TlsEndpoint& server, Channel& ch, KeyFactory& keys, bool mutual);

// ---------------------------------------------------------------------------
// Kerberos

inline constexpr std::uint64_t kDefaultValidity = 100;
inline constexpr std::uint64_t kDefaultSkew = 5;

struct ClockPolicy {
  std::uint64_t skew_window = kDefaultSkew;
  bool fresh(std::uint64_t stamp, std::uint64_t now) const {
    return (stamp > now ? stamp - now : now - stamp) <= skew_window;
  }
};

struct KrbTicket {
  std::string username;
  IpAddr client_addr;
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  Key embedded_key;
  std::string sealed_for;

  Term to_term() const;
  /// Throws IdentityMismatch on a malformed body.
  static KrbTicket from_term(const Term& body, const std::string& sealed_for);
};

/// The authentication server and TGS share one database, as in a KDC.
struct Kdc {
  std::string as_name = "AS";
  std::string tgs_name = "TGS";
  Key tgs_secret;
  std::map<std::string, Key> users;     // username -> password_key
  std::map<std::string, Key> services;  // service -> secret shared with it
  std::uint64_t validity = kDefaultValidity;
  ClockPolicy clock;
  KeyFactory keys;  // session keys handed out by AS and TGS

  void add_user(const std::string& user, const std::string& password);
};

struct ServiceServer {
  std::string name;
  Key secret;
  ClockPolicy clock;
};

struct ServiceGrant {
  Key session_key;
  Term ticket;  // Message E, opaque to the client
};

struct KrbClient {
  std::string node;
  std::string username;
  IpAddr addr;
  std::string password;  // typed by the user, never sent
  std::optional<Key> tgs_session_key;
  std::optional<Term> tgt;
  std::map<std::string, ServiceGrant> grants;
  int password_uses = 0;
};

/// Messages A and B. Throws UnknownPrincipal; KeyMismatch for a wrong password.
void krb_as_exchange(KrbClient& c, Kdc& kdc, Channel& ch);
/// Messages C/D out, E/F back. Throws TicketExpired, ClockSkew,
/// IdentityMismatch, BadTimestampEcho, UnknownPrincipal.
ServiceGrant krb_tgs_exchange(KrbClient& c, Kdc& kdc, const std::string& service, Channel& ch);
/// Messages E/G out, H back. Throws TicketExpired, ClockSkew,
/// IdentityMismatch, BadTimestampEcho.
void krb_ss_exchange(KrbClient& c, ServiceServer& ss, Channel& ch);

// Server-side steps, exposed so captured messages can be replayed.
/// Returns (E, F).
std::pair<Term, Term> tgs_respond(Kdc& kdc, const Term& msg_c, const Term& msg_d, std::uint64_t now);
/// Returns H.
Term ss_respond(ServiceServer& ss, const Term& msg_e, const Term& msg_g, std::uint64_t now);

/// Authenticator body: tuple(username, addr, "ts=<t>").
Term authenticator(const std::string& user, IpAddr addr, std::uint64_t ts);

}  // namespace netsec::handshakes
