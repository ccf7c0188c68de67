#pragma once

// Secure e-mail envelopes (PGP style and S/MIME) and the link versus
// end-to-end exposure and key-count analysis.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netsec/simnet.hpp"
#include "netsec/symcrypto.hpp"

namespace netsec::secmail {

using symcrypto::Key;
using symcrypto::KeyFactory;
using symcrypto::KeyPair;
using symcrypto::TrustStore;

enum class Scheme { PgpStyle, Smime };
std::string_view to_string(Scheme s);

struct MailParty {
  std::string name;
  KeyPair keys;
  Term cert;
};

struct MailEnvelope {
  std::string outer_header;
  Scheme scheme = Scheme::PgpStyle;
  std::vector<Term> components;

  /// tuple(Plain(scheme), Plain(outer header), components...)
  Term to_term() const;
  /// Throws InvalidArgument when the term is not an envelope.
  static MailEnvelope from_term(const Term& t);
  /// One line per component, numbered from 1.
  std::string render() const;
};

MailEnvelope pgp_seal(const MailParty& sender, const Key& receiver_pub, const std::string& header,
                      const std::string& body);

struct PgpOpened {
  std::string header;
  std::string body;
  std::string sender;               // certified subject
  bool non_repudiation_ok = false;  // inner seal opened under the certified key
};

/// Throws KeyMismatch, CertRejected, HeaderMismatch. When the inner seal does
/// not open under the certified key, header and body stay empty.
PgpOpened pgp_open(const Key& receiver_prv, const TrustStore& store, const MailEnvelope& env);

/// A fresh session key per message comes from `keys`.
MailEnvelope smime_seal(const MailParty& sender, const Key& receiver_pub, const std::string& header,
                        const std::string& body, KeyFactory& keys);

struct SmimeOpened {
  std::string header;
  std::string body;
  std::string sender;
  bool integrity_ok = false;
  bool sender_ok = false;
};

/// Throws KeyMismatch (session key or body unreadable), HeaderMismatch.
SmimeOpened smime_open(const Key& receiver_prv, const TrustStore& store, const MailEnvelope& env);

// ---------------------------------------------------------------------------
// Link versus end-to-end

enum class KeyMode { Link, E2eSymmetric, E2ePublic };
std::string_view to_string(KeyMode m);
/// Throws InvalidArgument for an unknown name.
KeyMode key_mode_from(const std::string& name);

/// Link: N(N-1)/2 host pairs; symmetric end-to-end: n(n-1)/2 user pairs;
/// public end-to-end: 2n. Throws InvalidArgument for count < 1.
std::uint64_t key_count(KeyMode mode, std::uint64_t count);

enum class ProtectionMode { Link, EndToEnd };
std::string_view to_string(ProtectionMode m);

struct ExposureEntry {
  std::string node;
  simnet::Layer layer = simnet::Layer::Link;
  bool plaintext = false;
  friend bool operator==(const ExposureEntry&, const ExposureEntry&) = default;
};

struct ExposureReport {
  ProtectionMode mode = ProtectionMode::Link;
  std::vector<ExposureEntry> exposure;  // endpoints: all four layers; intermediates: link and internet

  bool plaintext_at(const std::string& node, simnet::Layer layer) const;
  std::vector<std::string> render() const;  // "node layer plain|sealed"
};

/// Analytic exposure along `path`. Throws PathTooShort.
ExposureReport exposure_report(const std::vector<std::string>& path, ProtectionMode mode);

struct SimulatedExposure {
  ExposureReport report;
  int wire_sends = 0;            // link SENDs carrying the mail
  int wire_plaintext_sends = 0;  // of those, ones exposing the body
  bool delivered = false;        // receiver recovered the body
  simnet::Trace trace;
};

/// Sends one message from path.front() to path.back() over a line of routers,
/// with encrypted links (link mode) or an S/MIME envelope (end-to-end mode),
/// and reads the exposure off what each node actually handled.
/// Throws PathTooShort.
SimulatedExposure simulate_exposure(const std::vector<std::string>& path, ProtectionMode mode,
                                    const std::string& header, const std::string& body, std::uint64_t seed = 1);

}  // namespace netsec::secmail
