#include "atproto/plc_directory.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "atproto/base32.hpp"

namespace atproto::plc {

using identity::PlcOperation;
using json = nlohmann::json;

namespace {

bool signed_by_any(BytesView message, BytesView sig, const std::vector<std::string>& keys) {
  for (const std::string& key : keys) {
    auto pub = crypto::decode_public_key(key);
    if (pub && crypto::verify(message, sig, *pub)) return true;
  }
  return false;
}

}  // namespace

PlcDirectory::PlcDirectory(Options options) : options_(std::move(options)) {
  if (!options_.log_path.empty()) replay_log();
}

void PlcDirectory::chain_hash(const PlcOperation& op) {
  Bytes preimage(running_hash_.begin(), running_hash_.end());
  append(preimage, op.encode());
  running_hash_ = crypto::sha256(preimage);
}

PlcDirectory::SubmitResult PlcDirectory::submit_operation(const std::string& did,
                                                          const PlcOperation& op) {
  auto it = logs_.find(did);
  if (!op.prev) {
    if (it != logs_.end()) {
      // replaying the exact genesis is idempotent; anything else conflicts
      if (it->second.front().cid() == op.cid()) return {true, ""};
      return {false, "stale-prev"};
    }
    if (identity::plc_derive_did(op) != did) return {false, "wrong-did"};
    if (!signed_by_any(op.encode(false), op.sig, op.rotation_keys)) {
      return {false, "bad-signature"};
    }
    logs_[did].push_back(op);
    chain_hash(op);
    persist(did, op);
    return {true, ""};
  }

  if (it == logs_.end()) return {false, "unknown-did"};
  const std::vector<PlcOperation>& chain = it->second;
  codec::Cid head_cid = chain.back().cid();
  if (*op.prev != head_cid) {
    // a valid successor of a non-head operation is refused (no server-side
    // forks) but recorded for the fork-audit report
    for (size_t j = 0; j + 1 < chain.size(); ++j) {
      if (*op.prev == chain[j].cid() &&
          signed_by_any(op.encode(false), op.sig, chain[j].rotation_keys)) {
        fork_audit_.emplace_back(did, op);
        return {false, "stale-prev"};
      }
    }
    return {false, "stale-prev"};
  }
  if (!signed_by_any(op.encode(false), op.sig, chain.back().rotation_keys)) {
    return {false, "bad-signature"};
  }
  logs_[did].push_back(op);
  chain_hash(op);
  persist(did, op);
  return {true, ""};
}

std::optional<identity::DidDocument> PlcDirectory::get_document(const std::string& did) const {
  auto log = get_audit_log(did);
  if (!log || log->empty()) return std::nullopt;
  return log->back().materialize(did);
}

std::optional<std::vector<PlcOperation>> PlcDirectory::get_audit_log(
    const std::string& did) const {
  auto it = logs_.find(did);
  if (it == logs_.end()) return std::nullopt;
  std::vector<PlcOperation> log = it->second;

  auto fork_it = serve_fork_.find(did);
  if (fork_it != serve_fork_.end() && fork_it->second) {
    // replace the suffix after the fork point with a recorded fork branch
    for (const auto& [fdid, fop] : fork_audit_) {
      if (fdid != did) continue;
      for (size_t j = 0; j < log.size(); ++j) {
        if (fop.prev && *fop.prev == log[j].cid()) {
          log.resize(j + 1);
          log.push_back(fop);
          return log;
        }
      }
    }
  }
  auto omit_it = omit_tail_.find(did);
  if (omit_it != omit_tail_.end() && omit_it->second > 0) {
    size_t keep = log.size() > omit_it->second ? log.size() - omit_it->second : 1;
    log.resize(keep);
  }
  return log;
}

std::vector<std::string> PlcDirectory::list_dids() const {
  std::vector<std::string> out;
  out.reserve(logs_.size());
  for (const auto& [did, _] : logs_) out.push_back(did);
  return out;
}

void PlcDirectory::set_omit_tail(const std::string& did, size_t count) {
  omit_tail_[did] = count;
}

void PlcDirectory::set_serve_fork(const std::string& did, bool enabled) {
  serve_fork_[did] = enabled;
}

void PlcDirectory::clear_adversarial(const std::string& did) {
  omit_tail_.erase(did);
  serve_fork_.erase(did);
}

void PlcDirectory::persist(const std::string& did, const PlcOperation& op) {
  if (options_.log_path.empty()) return;
  std::ofstream out(options_.log_path, std::ios::app | std::ios::binary);
  json line;
  line["did"] = did;
  line["op"] = json::parse(operation_to_json(op));
  out << line.dump() << "\n";
}

void PlcDirectory::replay_log() {
  std::ifstream in(options_.log_path, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    auto op = operation_from_json(j["op"].dump());
    if (!op) continue;
    std::string did = j.value("did", "");
    logs_[did].push_back(*op);
    chain_hash(*op);
  }
}

std::string operation_to_json(const PlcOperation& op) {
  json j;
  j["prev"] = op.prev ? json(op.prev->str()) : json(nullptr);
  j["handle"] = op.handle;
  j["pds_url"] = op.pds_url;
  j["signing_key"] = op.signing_key;
  j["rotation_keys"] = op.rotation_keys;
  j["sig"] = "b" + base32::encode(op.sig);
  j["cid"] = op.cid().str();
  return j.dump();
}

std::optional<PlcOperation> operation_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  PlcOperation op;
  if (j.contains("prev") && !j["prev"].is_null()) {
    if (!j["prev"].is_string()) return std::nullopt;
    auto cid = codec::Cid::parse(j["prev"].get<std::string>());
    if (!cid) return std::nullopt;
    op.prev = *cid;
  }
  if (!j.contains("handle") || !j.contains("pds_url") || !j.contains("signing_key") ||
      !j.contains("rotation_keys") || !j.contains("sig")) {
    return std::nullopt;
  }
  op.handle = j["handle"];
  op.pds_url = j["pds_url"];
  op.signing_key = j["signing_key"];
  for (const auto& k : j["rotation_keys"]) {
    if (!k.is_string()) return std::nullopt;
    op.rotation_keys.push_back(k);
  }
  std::string sig = j["sig"];
  if (sig.empty() || sig[0] != 'b') return std::nullopt;
  auto raw = base32::decode(std::string_view(sig).substr(1));
  if (!raw) return std::nullopt;
  op.sig = *raw;
  return op;
}

std::string audit_log_to_json(const std::vector<PlcOperation>& ops) {
  json arr = json::array();
  for (const PlcOperation& op : ops) arr.push_back(json::parse(operation_to_json(op)));
  return arr.dump();
}

std::optional<std::vector<PlcOperation>> audit_log_from_json(const std::string& text) {
  json arr = json::parse(text, nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) return std::nullopt;
  std::vector<PlcOperation> ops;
  for (const auto& item : arr) {
    auto op = operation_from_json(item.dump());
    if (!op) return std::nullopt;
    ops.push_back(*op);
  }
  return ops;
}

}  // namespace atproto::plc
