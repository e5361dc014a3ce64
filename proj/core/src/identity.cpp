#include "atproto/identity.hpp"

#include <nlohmann/json.hpp>

#include "atproto/base32.hpp"
#include "atproto/crypto.hpp"

namespace atproto::identity {

using codec::Cid;
using codec::CidLink;
using codec::Value;
using json = nlohmann::json;

namespace {

bool valid_plc_id(std::string_view id) {
  if (id.size() != 24) return false;
  for (char c : id) {
    if (!((c >= 'a' && c <= 'z') || (c >= '2' && c <= '7'))) return false;
  }
  return true;
}

bool valid_dns_name(std::string_view name) {
  if (name.empty() || name.size() > 253) return false;
  bool label_start = true;
  size_t labels = 1;
  for (char c : name) {
    if (c == '.') {
      if (label_start) return false;
      label_start = true;
      ++labels;
      continue;
    }
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    if (!ok) return false;
    label_start = false;
  }
  return !label_start && labels >= 2;
}

bool signed_by_any(BytesView message, BytesView sig, const std::vector<std::string>& keys) {
  for (const std::string& key : keys) {
    auto pub = crypto::decode_public_key(key);
    if (pub && crypto::verify(message, sig, *pub)) return true;
  }
  return false;
}

}  // namespace

std::string Did::str() const {
  return method == Method::Plc ? "did:plc:" + id : "did:web:" + id;
}

std::optional<Did> Did::parse(std::string_view text) {
  if (text.starts_with("did:plc:")) {
    std::string id(text.substr(8));
    if (!valid_plc_id(id)) return std::nullopt;
    return Did{Method::Plc, std::move(id)};
  }
  if (text.starts_with("did:web:")) {
    std::string id(text.substr(8));
    if (!valid_dns_name(id)) return std::nullopt;
    return Did{Method::Web, std::move(id)};
  }
  return std::nullopt;
}

Value PlcOperation::to_value(bool with_sig) const {
  Value::Map m;
  m.emplace("prev", prev ? Value(CidLink{*prev}) : Value(nullptr));
  m.emplace("handle", Value(handle));
  m.emplace("pds_url", Value(pds_url));
  m.emplace("signing_key", Value(signing_key));
  Value::Array keys;
  for (const std::string& k : rotation_keys) keys.push_back(Value(k));
  m.emplace("rotation_keys", Value(std::move(keys)));
  if (with_sig) m.emplace("sig", Value(sig));
  return Value(std::move(m));
}

Bytes PlcOperation::encode(bool with_sig) const {
  return codec::encode(to_value(with_sig));
}

std::optional<PlcOperation> PlcOperation::from_value(const Value& v) {
  if (!v.is_map()) return std::nullopt;
  const Value* prev = v.at("prev");
  const Value* handle = v.at("handle");
  const Value* pds_url = v.at("pds_url");
  const Value* signing_key = v.at("signing_key");
  const Value* rotation_keys = v.at("rotation_keys");
  const Value* sig = v.at("sig");
  if (!prev || !handle || !handle->is_string() || !pds_url || !pds_url->is_string() ||
      !signing_key || !signing_key->is_string() || !rotation_keys ||
      !rotation_keys->is_array() || !sig || !sig->is_bytes()) {
    return std::nullopt;
  }
  PlcOperation op;
  if (prev->is_link()) {
    op.prev = prev->as_link();
  } else if (!prev->is_null()) {
    return std::nullopt;
  }
  op.handle = handle->as_string();
  op.pds_url = pds_url->as_string();
  op.signing_key = signing_key->as_string();
  for (const Value& k : rotation_keys->as_array()) {
    if (!k.is_string()) return std::nullopt;
    op.rotation_keys.push_back(k.as_string());
  }
  op.sig = sig->as_bytes();
  return op;
}

DidDocument PlcOperation::materialize(const std::string& did) const {
  return DidDocument{did, handle, pds_url, signing_key, rotation_keys};
}

std::string plc_derive_did(const PlcOperation& genesis) {
  crypto::Digest digest = crypto::sha256(genesis.encode(true));
  Bytes truncated(digest.begin(), digest.begin() + 15);  // 120 bits
  return "did:plc:" + base32::encode(truncated);
}

PlcLogResult plc_validate_log(const std::vector<PlcOperation>& ops) {
  PlcLogResult result;
  if (ops.empty()) {
    result.error = PlcLogError{PlcLogErrorKind::NotGenesis, 0};
    return result;
  }
  const PlcOperation& genesis = ops[0];
  if (genesis.prev) {
    result.error = PlcLogError{PlcLogErrorKind::NotGenesis, 0};
    return result;
  }
  if (!signed_by_any(genesis.encode(false), genesis.sig, genesis.rotation_keys)) {
    result.error = PlcLogError{PlcLogErrorKind::BadSignature, 0};
    return result;
  }
  std::vector<Cid> cids;
  cids.push_back(genesis.cid());
  for (size_t i = 1; i < ops.size(); ++i) {
    const PlcOperation& op = ops[i];
    if (!op.prev || *op.prev != cids.back()) {
      // a valid successor of an earlier operation is a fork, not a break
      for (size_t j = 0; j + 1 < cids.size(); ++j) {
        if (op.prev && *op.prev == cids[j] &&
            signed_by_any(op.encode(false), op.sig, ops[j].rotation_keys)) {
          result.error = PlcLogError{PlcLogErrorKind::ForkDetected, i};
          return result;
        }
      }
      result.error = PlcLogError{PlcLogErrorKind::BrokenChain, i};
      return result;
    }
    if (!signed_by_any(op.encode(false), op.sig, ops[i - 1].rotation_keys)) {
      result.error = PlcLogError{PlcLogErrorKind::BadSignature, i};
      return result;
    }
    cids.push_back(op.cid());
  }
  result.document = ops.back().materialize(plc_derive_did(genesis));
  return result;
}

ResolveResult resolve_did(const Did& did, ResolverEnv& env) {
  ResolveResult result;
  if (did.method == Did::Method::Plc) {
    auto log = env.directory.fetch_audit_log(did.str());
    if (!log || log->empty()) {
      result.error = ResolveErrorKind::Unresolvable;
      return result;
    }
    PlcLogResult validated = plc_validate_log(*log);
    if (!validated.ok() || validated.document->did != did.str()) {
      result.error = ResolveErrorKind::ValidationFailed;
      return result;
    }
    result.document = std::move(validated.document);
    return result;
  }
  auto body = env.net.https_get_text("https://" + did.id + "/.well-known/did.json");
  if (!body) {
    result.error = ResolveErrorKind::Unresolvable;
    return result;
  }
  auto doc = document_from_json(*body);
  if (!doc) {
    result.error = ResolveErrorKind::ValidationFailed;
    return result;
  }
  result.document = std::move(doc);
  return result;
}

HandleStatus verify_handle(const std::string& handle, const std::string& claimed_did,
                           ResolverEnv& env) {
  HandleStatus status;
  status.handle = handle;
  status.did = claimed_did;
  status.checked_at = env.clock.now_micros();
  status.state = HandleStatus::State::Invalid;

  std::optional<std::string> forward;
  for (const std::string& txt : env.net.dns_txt("_atproto." + handle)) {
    if (txt.starts_with("did=")) {
      forward = txt.substr(4);
      break;  // TXT takes precedence over well-known
    }
  }
  if (!forward) {
    auto body = env.net.https_get_text("https://" + handle + "/.well-known/atproto-did");
    if (body) {
      std::string trimmed = *body;
      while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == '\r')) {
        trimmed.pop_back();
      }
      if (!trimmed.empty()) forward = trimmed;
    }
  }
  if (!forward || *forward != claimed_did) {
    status.reason = "forward-missing";
    return status;
  }

  auto did = Did::parse(claimed_did);
  if (!did) {
    status.reason = "resolution-error";
    return status;
  }
  ResolveResult resolved = resolve_did(*did, env);
  if (!resolved.ok()) {
    status.reason = "resolution-error";
    return status;
  }
  if (resolved.document->handle != handle) {
    status.reason = "backward-mismatch";
    return status;
  }
  status.state = HandleStatus::State::Verified;
  status.reason.clear();
  return status;
}

std::string document_to_json(const DidDocument& doc) {
  json j;
  j["did"] = doc.did;
  j["handle"] = doc.handle;
  j["pds_url"] = doc.pds_url;
  j["signing_key"] = doc.signing_key;
  j["rotation_keys"] = doc.rotation_keys;
  return j.dump();
}

std::optional<DidDocument> document_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  DidDocument doc;
  if (!j.contains("did") || !j["did"].is_string()) return std::nullopt;
  doc.did = j["did"];
  doc.handle = j.value("handle", "");
  doc.pds_url = j.value("pds_url", "");
  doc.signing_key = j.value("signing_key", "");
  if (j.contains("rotation_keys")) {
    for (const auto& k : j["rotation_keys"]) {
      if (!k.is_string()) return std::nullopt;
      doc.rotation_keys.push_back(k);
    }
  }
  return doc;
}

}  // namespace atproto::identity
