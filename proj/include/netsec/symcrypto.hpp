#pragma once

// Symbolic (Dolev-Yao style) cryptography. Ciphertexts, digests, macs and
// certificates are inspectable terms; the only way to see inside a Sealed term
// is open() with the matching key.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace netsec::symcrypto {

enum class KeyKind : std::uint8_t { Public, Private, Symmetric };

struct Key {
  KeyKind kind = KeyKind::Symmetric;
  std::string owner;
  std::uint32_t serial = 0;
  // Hidden derivation material (e.g. a password fingerprint). Never rendered.
  std::uint64_t tag = 0;

  /// "pub:B#1", "prv:B#1", "sym:k#3"
  std::string label() const;

  friend auto operator<=>(const Key&, const Key&) = default;
};

struct KeyPair {
  Key pub;
  Key prv;
};

/// True when `opener` undoes a seal made with `sealer`: a public/private pair of
/// the same owner and serial in either direction, or the identical symmetric key.
bool keys_match(const Key& sealer, const Key& opener);

/// Deterministic key generator; serials run per owner across all kinds.
class KeyFactory {
 public:
  explicit KeyFactory(std::uint64_t seed = 0) : seed_(seed) {}

  KeyPair keygen_pair(const std::string& owner);
  Key keygen_symmetric(const std::string& owner);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint32_t next_serial(const std::string& owner);

  std::uint64_t seed_;
  std::map<std::string, std::uint32_t> serials_;
};

class Term {
 public:
  enum class Kind : std::uint8_t { Plain, Sealed, Digest, Mac, Cert, Pair, KeyValue };

  /// Plain("")
  Term();

  static Term plain(std::string bytes);
  static Term pair(Term left, Term right);
  /// A key carried as data (e.g. a session key inside a sealed notification).
  static Term key_value(Key key);
  /// Right-nested pairs: tuple({a, b, c}) == Pair(a, Pair(b, c)).
  static Term tuple(const std::vector<Term>& items);

  Kind kind() const;
  bool is(Kind k) const { return kind() == k; }

  // Accessors for the transparent constructors. Each throws InvalidArgument when
  // called on a term of the wrong kind. Sealed, Digest and Mac bodies have no
  // accessor on purpose.
  const std::string& bytes() const;
  const Term& left() const;
  const Term& right() const;
  const Key& carried_key() const;
  /// The key named in a Sealed or Mac header.
  const Key& header_key() const;
  const std::string& cert_subject() const;
  const Key& cert_key() const;
  const std::string& cert_issuer() const;

  /// Inverse of tuple(): flattens the right spine of nested pairs into `n` items.
  std::vector<Term> untuple(std::size_t n) const;

  /// Nested prefix rendering, e.g. Sealed(pub:B#1, Plain("hi")).
  std::string render() const;

  friend bool operator==(const Term& a, const Term& b);
  friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }

  struct Node;

 private:
  explicit Term(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;

  friend struct TermAccess;
};

struct TrustStore {
  std::set<std::string> trusted_issuers;
  std::map<std::string, Key> known_hosts;

  bool trusts(const std::string& issuer) const { return trusted_issuers.count(issuer) > 0; }
  std::optional<Key> known_host(const std::string& host) const;
  /// Adds a host key. Existing entries are never replaced; returns false when the
  /// host is already pinned to a different key.
  bool remember_host(const std::string& host, const Key& key);
};

// Core operations.
Term seal(const Key& k, const Term& t);
/// Returns the body iff `k` matches the sealing key. Throws NotSealed / KeyMismatch.
Term open(const Key& k, const Term& t);
Term digest(const Term& t);
/// Throws InvalidArgument unless k is symmetric.
Term mac(const Key& k, const Term& t);
bool mac_verify(const Key& k, const Term& t, const Term& m);
Term cert_issue(const std::string& ca, const std::string& subject, const Key& pk);
/// Throws NotACert when c is not a certificate.
bool cert_verify(const TrustStore& store, const Term& c);
/// Symmetric in its arguments.
Key dh_agree(const Term& a_contrib, const Term& b_contrib);
/// Labelled key-derivation constructor: kdf(k) -> symmetric key.
Key kdf(const Key& session_key);
/// One-way password function. The password itself is not recoverable from the
/// key or its rendering.
Key password_key(const std::string& owner, const std::string& password);

// Serialisation: self-delimiting binary form used by the ESP codec.
std::string serialize(const Term& t);
/// Parses one term starting at `pos` and advances it. Throws TruncatedHeader.
Term deserialize(std::string_view bytes, std::size_t& pos);
Term deserialize(std::string_view bytes);

/// `n` deterministic bytes derived from the term's full identity (including
/// hidden key material). Used as the wire image of symbolic macs.
std::string fingerprint(const Term& t, std::size_t n);

// Secrecy analysis.
/// Plain leaves reachable without opening any seal. Digest and Mac bodies are
/// one-way and therefore not reachable.
std::vector<std::string> exposed_plaintexts(const Term& t);
/// Keys carried as data and reachable without opening any seal.
std::vector<Key> exposed_keys(const Term& t);
bool exposes_text(const Term& t, std::string_view needle);

/// What an on-path adversary holding only `adversary_key` can do to a term in
/// flight: edits the last reachable plaintext, or swaps an opaque body for its
/// own content.
Term tamper(const Term& t, const Key& adversary_key);

}  // namespace netsec::symcrypto
