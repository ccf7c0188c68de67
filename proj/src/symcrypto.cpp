#include "netsec/symcrypto.hpp"

#include <algorithm>
#include <sstream>
#include <variant>

#include "netsec/error.hpp"
#include "netsec/hash.hpp"

namespace netsec::symcrypto {

namespace {

struct PlainNode {
  std::string bytes;
};
struct SealedNode {
  Key key;
  Term body;
};
struct DigestNode {
  Term body;
};
struct MacNode {
  Key key;
  Term body;
};
struct CertNode {
  std::string subject;
  Key pk;
  std::string issuer;
};
struct PairNode {
  Term left, right;
};
struct KeyNode {
  Key key;
};

std::string kind_prefix(KeyKind k) {
  switch (k) {
    case KeyKind::Public: return "pub";
    case KeyKind::Private: return "prv";
    case KeyKind::Symmetric: return "sym";
  }
  return "?";
}

bool printable(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x20 && u < 0x7f;
  });
}

std::string render_bytes(std::string_view s) {
  if (printable(s)) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "0x";
  for (unsigned char c : s) {
    out += kHex[c >> 4];
    out += kHex[c & 0xf];
  }
  return out;
}

}  // namespace

struct Term::Node {
  std::variant<PlainNode, SealedNode, DigestNode, MacNode, CertNode, PairNode, KeyNode> v;
};

struct TermAccess {
  static const Term::Node& node(const Term& t) { return *t.node_; }
  static Term make(Term::Node n) { return Term(std::make_shared<const Term::Node>(std::move(n))); }
};

namespace {
const Term::Node& N(const Term& t) { return TermAccess::node(t); }
}  // namespace

// ---------------------------------------------------------------------------
// Keys

std::string Key::label() const {
  return kind_prefix(kind) + ":" + owner + "#" + std::to_string(serial);
}

bool keys_match(const Key& sealer, const Key& opener) {
  const bool same_identity =
      sealer.owner == opener.owner && sealer.serial == opener.serial && sealer.tag == opener.tag;
  switch (sealer.kind) {
    case KeyKind::Symmetric: return opener.kind == KeyKind::Symmetric && same_identity;
    case KeyKind::Public: return opener.kind == KeyKind::Private && same_identity;
    case KeyKind::Private: return opener.kind == KeyKind::Public && same_identity;
  }
  return false;
}

std::uint32_t KeyFactory::next_serial(const std::string& owner) { return ++serials_[owner]; }

KeyPair KeyFactory::keygen_pair(const std::string& owner) {
  const auto serial = next_serial(owner);
  const auto tag = derive(seed_, owner, serial);
  return {Key{KeyKind::Public, owner, serial, tag}, Key{KeyKind::Private, owner, serial, tag}};
}

Key KeyFactory::keygen_symmetric(const std::string& owner) {
  const auto serial = next_serial(owner);
  return Key{KeyKind::Symmetric, owner, serial, derive(seed_, owner, serial)};
}

std::optional<Key> TrustStore::known_host(const std::string& host) const {
  auto it = known_hosts.find(host);
  if (it == known_hosts.end()) return std::nullopt;
  return it->second;
}

bool TrustStore::remember_host(const std::string& host, const Key& key) {
  auto [it, inserted] = known_hosts.emplace(host, key);
  return inserted || it->second == key;
}

// ---------------------------------------------------------------------------
// Term construction and access

Term::Term() : Term(plain("")) {}

Term Term::plain(std::string bytes) { return TermAccess::make({PlainNode{std::move(bytes)}}); }

Term Term::pair(Term left, Term right) {
  return TermAccess::make({PairNode{std::move(left), std::move(right)}});
}

Term Term::key_value(Key key) { return TermAccess::make({KeyNode{std::move(key)}}); }

Term Term::tuple(const std::vector<Term>& items) {
  if (items.empty()) return plain("");
  Term acc = items.back();
  for (auto it = items.rbegin() + 1; it != items.rend(); ++it) acc = pair(*it, acc);
  return acc;
}

std::vector<Term> Term::untuple(std::size_t n) const {
  std::vector<Term> out;
  Term cur = *this;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.push_back(cur.left());
    cur = cur.right();
  }
  if (n > 0) out.push_back(cur);
  return out;
}

Term::Kind Term::kind() const { return static_cast<Kind>(node_->v.index()); }

namespace {
[[noreturn]] void wrong_kind(const char* what) {
  throw Error(Errc::InvalidArgument, std::string("term is not ") + what);
}
}  // namespace

const std::string& Term::bytes() const {
  if (auto* p = std::get_if<PlainNode>(&node_->v)) return p->bytes;
  wrong_kind("Plain");
}
const Term& Term::left() const {
  if (auto* p = std::get_if<PairNode>(&node_->v)) return p->left;
  wrong_kind("a Pair");
}
const Term& Term::right() const {
  if (auto* p = std::get_if<PairNode>(&node_->v)) return p->right;
  wrong_kind("a Pair");
}
const Key& Term::carried_key() const {
  if (auto* p = std::get_if<KeyNode>(&node_->v)) return p->key;
  wrong_kind("a key value");
}
const Key& Term::header_key() const {
  if (auto* s = std::get_if<SealedNode>(&node_->v)) return s->key;
  if (auto* m = std::get_if<MacNode>(&node_->v)) return m->key;
  wrong_kind("Sealed or Mac");
}
const std::string& Term::cert_subject() const {
  if (auto* c = std::get_if<CertNode>(&node_->v)) return c->subject;
  throw Error(Errc::NotACert);
}
const Key& Term::cert_key() const {
  if (auto* c = std::get_if<CertNode>(&node_->v)) return c->pk;
  throw Error(Errc::NotACert);
}
const std::string& Term::cert_issuer() const {
  if (auto* c = std::get_if<CertNode>(&node_->v)) return c->issuer;
  throw Error(Errc::NotACert);
}

std::string Term::render() const {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PlainNode>) {
          return "Plain(" + render_bytes(n.bytes) + ")";
        } else if constexpr (std::is_same_v<T, SealedNode>) {
          return "Sealed(" + n.key.label() + ", " + n.body.render() + ")";
        } else if constexpr (std::is_same_v<T, DigestNode>) {
          return "Digest(" + n.body.render() + ")";
        } else if constexpr (std::is_same_v<T, MacNode>) {
          return "Mac(" + n.key.label() + ", " + n.body.render() + ")";
        } else if constexpr (std::is_same_v<T, CertNode>) {
          return "Cert(" + n.subject + ", " + n.pk.label() + ", " + n.issuer + ")";
        } else if constexpr (std::is_same_v<T, PairNode>) {
          return "Pair(" + n.left.render() + ", " + n.right.render() + ")";
        } else {
          return "Key(" + n.key.label() + ")";
        }
      },
      node_->v);
}

bool operator==(const Term& a, const Term& b) {
  if (a.node_ == b.node_) return true;
  if (a.node_->v.index() != b.node_->v.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node_->v);
        if constexpr (std::is_same_v<T, PlainNode>) return x.bytes == y.bytes;
        else if constexpr (std::is_same_v<T, SealedNode>) return x.key == y.key && x.body == y.body;
        else if constexpr (std::is_same_v<T, DigestNode>) return x.body == y.body;
        else if constexpr (std::is_same_v<T, MacNode>) return x.key == y.key && x.body == y.body;
        else if constexpr (std::is_same_v<T, CertNode>)
          return x.subject == y.subject && x.pk == y.pk && x.issuer == y.issuer;
        else if constexpr (std::is_same_v<T, PairNode>) return x.left == y.left && x.right == y.right;
        else return x.key == y.key;
      },
      a.node_->v);
}

// ---------------------------------------------------------------------------
// Operations

Term seal(const Key& k, const Term& t) { return TermAccess::make({SealedNode{k, t}}); }

Term open(const Key& k, const Term& t) {
  const auto* s = std::get_if<SealedNode>(&N(t).v);
  if (!s) throw Error(Errc::NotSealed, t.render());
  if (!keys_match(s->key, k)) {
    throw Error(Errc::KeyMismatch, k.label() + " cannot open a seal made with " + s->key.label());
  }
  return s->body;
}

Term digest(const Term& t) { return TermAccess::make({DigestNode{t}}); }

Term mac(const Key& k, const Term& t) {
  if (k.kind != KeyKind::Symmetric) throw Error(Errc::InvalidArgument, "mac needs a symmetric key");
  return TermAccess::make({MacNode{k, t}});
}

bool mac_verify(const Key& k, const Term& t, const Term& m) {
  const auto* mn = std::get_if<MacNode>(&N(m).v);
  return mn && mn->key == k && mn->body == t;
}

Term cert_issue(const std::string& ca, const std::string& subject, const Key& pk) {
  return TermAccess::make({CertNode{subject, pk, ca}});
}

bool cert_verify(const TrustStore& store, const Term& c) {
  const auto* cn = std::get_if<CertNode>(&N(c).v);
  if (!cn) throw Error(Errc::NotACert, c.render());
  return store.trusts(cn->issuer);
}

Key dh_agree(const Term& a_contrib, const Term& b_contrib) {
  auto a = serialize(a_contrib);
  auto b = serialize(b_contrib);
  if (b < a) std::swap(a, b);
  const std::uint64_t tag = fnv1a(b, fnv1a(a) ^ 0x64680000ULL);
  std::ostringstream owner;
  owner << "dh." << std::hex << (tag & 0xffffffffULL);
  return Key{KeyKind::Symmetric, owner.str(), 0, tag};
}

Key kdf(const Key& session_key) {
  return Key{KeyKind::Symmetric, "kdf(" + session_key.owner + "#" + std::to_string(session_key.serial) + ")",
             session_key.serial, splitmix64(session_key.tag ^ 0x6b6466ULL)};
}

Key password_key(const std::string& owner, const std::string& password) {
  return Key{KeyKind::Symmetric, "pwkey(" + owner + ")", 0, fnv1a(password, 0x7077ULL)};
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out += static_cast<char>((v >> shift) & 0xff);
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out += static_cast<char>((v >> shift) & 0xff);
}
void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}
void put_key(std::string& out, const Key& k) {
  out += static_cast<char>(k.kind);
  put_str(out, k.owner);
  put_u32(out, k.serial);
  put_u64(out, k.tag);
}

struct Reader {
  std::string_view in;
  std::size_t& pos;

  void need(std::size_t n) const {
    if (pos + n > in.size()) throw Error(Errc::TruncatedHeader, "term serialisation ends early");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(in[pos++]);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<std::uint8_t>(in[pos++]);
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in.substr(pos, n));
    pos += n;
    return s;
  }
  Key key() {
    Key k;
    const auto kind = u8();
    if (kind > 2) throw Error(Errc::LengthMismatch, "bad key kind");
    k.kind = static_cast<KeyKind>(kind);
    k.owner = str();
    k.serial = u32();
    k.tag = u64();
    return k;
  }
};

void serialize_into(std::string& out, const Term& t) {
  out += static_cast<char>(t.kind());
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PlainNode>) {
          put_str(out, n.bytes);
        } else if constexpr (std::is_same_v<T, SealedNode> || std::is_same_v<T, MacNode>) {
          put_key(out, n.key);
          serialize_into(out, n.body);
        } else if constexpr (std::is_same_v<T, DigestNode>) {
          serialize_into(out, n.body);
        } else if constexpr (std::is_same_v<T, CertNode>) {
          put_str(out, n.subject);
          put_key(out, n.pk);
          put_str(out, n.issuer);
        } else if constexpr (std::is_same_v<T, PairNode>) {
          serialize_into(out, n.left);
          serialize_into(out, n.right);
        } else {
          put_key(out, n.key);
        }
      },
      N(t).v);
}

Term read_term(Reader& r, int depth) {
  if (depth > 256) throw Error(Errc::LengthMismatch, "term nesting too deep");
  const auto tag = r.u8();
  switch (static_cast<Term::Kind>(tag)) {
    case Term::Kind::Plain: return Term::plain(r.str());
    case Term::Kind::Sealed: {
      auto k = r.key();
      return seal(k, read_term(r, depth + 1));
    }
    case Term::Kind::Digest: return digest(read_term(r, depth + 1));
    case Term::Kind::Mac: {
      auto k = r.key();
      return TermAccess::make({MacNode{k, read_term(r, depth + 1)}});
    }
    case Term::Kind::Cert: {
      auto subject = r.str();
      auto pk = r.key();
      auto issuer = r.str();
      return cert_issue(issuer, subject, pk);
    }
    case Term::Kind::Pair: {
      auto l = read_term(r, depth + 1);
      auto rr = read_term(r, depth + 1);
      return Term::pair(std::move(l), std::move(rr));
    }
    case Term::Kind::KeyValue: return Term::key_value(r.key());
  }
  throw Error(Errc::LengthMismatch, "unknown term tag " + std::to_string(tag));
}

}  // namespace

std::string serialize(const Term& t) {
  std::string out;
  serialize_into(out, t);
  return out;
}

Term deserialize(std::string_view bytes, std::size_t& pos) {
  Reader r{bytes, pos};
  return read_term(r, 0);
}

Term deserialize(std::string_view bytes) {
  std::size_t pos = 0;
  auto t = deserialize(bytes, pos);
  if (pos != bytes.size()) throw Error(Errc::LengthMismatch, "trailing bytes after term");
  return t;
}

std::string fingerprint(const Term& t, std::size_t n) {
  const auto image = serialize(t);
  std::string out;
  out.reserve(n);
  std::uint64_t block = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 8 == 0) block = splitmix64(fnv1a(image, kFnvOffset ^ (i / 8 + 1)));
    out += static_cast<char>((block >> (8 * (i % 8))) & 0xff);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Secrecy analysis

namespace {

template <typename Fn>
void walk_exposed(const Term& t, Fn&& fn) {
  fn(t);
  if (const auto* p = std::get_if<PairNode>(&N(t).v)) {
    walk_exposed(p->left, fn);
    walk_exposed(p->right, fn);
  }
}

std::optional<Term> tamper_last_plain(const Term& t) {
  const auto& v = N(t).v;
  if (const auto* p = std::get_if<PlainNode>(&v)) return Term::plain(p->bytes + "~");
  if (const auto* p = std::get_if<PairNode>(&v)) {
    if (auto r = tamper_last_plain(p->right)) return Term::pair(p->left, *r);
    if (auto l = tamper_last_plain(p->left)) return Term::pair(*l, p->right);
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> exposed_plaintexts(const Term& t) {
  std::vector<std::string> out;
  walk_exposed(t, [&](const Term& x) {
    if (const auto* p = std::get_if<PlainNode>(&N(x).v)) out.push_back(p->bytes);
  });
  return out;
}

std::vector<Key> exposed_keys(const Term& t) {
  std::vector<Key> out;
  walk_exposed(t, [&](const Term& x) {
    if (const auto* k = std::get_if<KeyNode>(&N(x).v)) out.push_back(k->key);
  });
  return out;
}

bool exposes_text(const Term& t, std::string_view needle) {
  for (const auto& s : exposed_plaintexts(t)) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

Term tamper(const Term& t, const Key& adversary_key) {
  if (auto edited = tamper_last_plain(t)) return *edited;
  const auto& v = N(t).v;
  if (const auto* s = std::get_if<SealedNode>(&v)) {
    // Anyone may seal under a public key; otherwise the adversary can only
    // substitute a body sealed under its own key.
    if (s->key.kind == KeyKind::Public) return seal(s->key, Term::plain("tampered"));
    return seal(adversary_key, Term::plain("tampered"));
  }
  if (const auto* c = std::get_if<CertNode>(&v)) return cert_issue("M-CA", c->subject, adversary_key);
  if (const auto* p = std::get_if<PairNode>(&v)) return Term::pair(p->left, tamper(p->right, adversary_key));
  if (std::holds_alternative<KeyNode>(v)) return Term::key_value(adversary_key);
  return digest(Term::plain("tampered"));
}

}  // namespace netsec::symcrypto
