#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "atproto/cbor.hpp"
#include "atproto/clock.hpp"

namespace atproto::identity {

// did:plc:<24 lowercase base32 chars> or did:web:<dns name>.
struct Did {
  enum class Method { Plc, Web };
  Method method = Method::Plc;
  std::string id;

  std::string str() const;
  static std::optional<Did> parse(std::string_view text);
};

struct DidDocument {
  std::string did;
  std::string handle;
  std::string pds_url;
  std::string signing_key;                // multibase public key
  std::vector<std::string> rotation_keys;  // document-control keys, ordered

  bool operator==(const DidDocument&) const = default;
};

// One link in a did:plc operation chain. The genesis operation (prev null)
// is signed by one of its own rotation keys; every successor is signed by a
// rotation key of the operation it extends.
struct PlcOperation {
  std::optional<codec::Cid> prev;
  std::string handle;
  std::string pds_url;
  std::string signing_key;
  std::vector<std::string> rotation_keys;
  Bytes sig;

  Bytes encode(bool with_sig = true) const;
  codec::Cid cid() const { return codec::Cid::of(encode()); }
  static std::optional<PlcOperation> from_value(const codec::Value& v);
  codec::Value to_value(bool with_sig = true) const;

  DidDocument materialize(const std::string& did) const;
};

// Identifier = base32 of the first 120 bits of SHA-256 over the canonical
// encoding of the complete signed genesis operation; 24 characters.
std::string plc_derive_did(const PlcOperation& genesis);

enum class PlcLogErrorKind { NotGenesis, BrokenChain, BadSignature, ForkDetected };

struct PlcLogError {
  PlcLogErrorKind kind;
  size_t index = 0;  // offending operation
};

struct PlcLogResult {
  std::optional<DidDocument> document;
  std::optional<PlcLogError> error;
  bool ok() const { return document.has_value(); }
};

// Validates prev-CID chaining, the rotation-key signature chain, and the
// genesis self-signature; materializes the final document with the DID
// derived from the genesis operation.
PlcLogResult plc_validate_log(const std::vector<PlcOperation>& ops);

// Network access used by resolution; faked in tests and the simulator.
class Network {
 public:
  virtual ~Network() = default;
  virtual std::vector<std::string> dns_txt(const std::string& name) = 0;
  virtual std::optional<std::string> https_get_text(const std::string& url) = 0;
};

// Directory access for did:plc resolution.
class DirectoryClient {
 public:
  virtual ~DirectoryClient() = default;
  virtual std::optional<std::vector<PlcOperation>> fetch_audit_log(const std::string& did) = 0;
};

struct ResolverEnv {
  Network& net;
  DirectoryClient& directory;
  const Clock& clock;
};

enum class ResolveErrorKind { Unresolvable, ValidationFailed };

struct ResolveResult {
  std::optional<DidDocument> document;
  std::optional<ResolveErrorKind> error;
  bool ok() const { return document.has_value(); }
};

// plc: fetch the full audit log and validate it client-side. web: fetch the
// document from /.well-known/did.json on the identifier domain (trust is
// rooted in web hosting for that method).
ResolveResult resolve_did(const Did& did, ResolverEnv& env);

struct HandleStatus {
  std::string handle;
  std::string did;
  enum class State { Verified, Invalid, Unchecked };
  State state = State::Unchecked;
  // forward-missing | backward-mismatch | resolution-error
  std::string reason;
  std::int64_t checked_at = 0;
};

// Forward link: DNS TXT "did=<did>" at _atproto.<handle>, or the text body
// of https://<handle>/.well-known/atproto-did; TXT wins when both are
// present. Backward link: the resolved document's handle field. Verified
// only when both hold.
HandleStatus verify_handle(const std::string& handle, const std::string& claimed_did,
                           ResolverEnv& env);

// JSON document form used by did:web and the directory HTTP surface.
std::string document_to_json(const DidDocument& doc);
std::optional<DidDocument> document_from_json(const std::string& json);

}  // namespace atproto::identity
