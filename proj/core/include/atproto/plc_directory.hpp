#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atproto/crypto.hpp"
#include "atproto/identity.hpp"

namespace atproto::plc {

// The mostly-untrusted central log server for did:plc. It validates
// submissions against the rotation-key chain but clients never need to
// trust it: documents are re-validated client-side from the audit log.
//
// Adversarial modes exist to exercise the threat model: the directory can
// omit tail operations or serve a recorded fork branch, but it can only
// ever return byte strings it received.
class PlcDirectory {
 public:
  struct Options {
    // Append-only persistence log; empty disables persistence.
    std::string log_path;
  };

  PlcDirectory() = default;
  explicit PlcDirectory(Options options);

  struct SubmitResult {
    bool accepted = false;
    // bad-signature | wrong-did | stale-prev | unknown-did
    std::string reason;
  };

  SubmitResult submit_operation(const std::string& did, const identity::PlcOperation& op);
  std::optional<identity::DidDocument> get_document(const std::string& did) const;
  std::optional<std::vector<identity::PlcOperation>> get_audit_log(const std::string& did) const;

  std::vector<std::string> list_dids() const;

  // Adversarial configuration (per DID).
  void set_omit_tail(const std::string& did, size_t count);
  void set_serve_fork(const std::string& did, bool enabled);
  void clear_adversarial(const std::string& did);

  // Valid-but-rejected successors of non-head operations, kept for the
  // fork-audit report.
  const std::vector<std::pair<std::string, identity::PlcOperation>>& fork_audit() const {
    return fork_audit_;
  }

  // Running hash over accepted operations; a transparency log could anchor
  // to this.
  const crypto::Digest& accepted_ops_hash() const { return running_hash_; }

 private:
  void persist(const std::string& did, const identity::PlcOperation& op);
  void replay_log();
  void chain_hash(const identity::PlcOperation& op);

  Options options_;
  std::map<std::string, std::vector<identity::PlcOperation>> logs_;
  std::vector<std::pair<std::string, identity::PlcOperation>> fork_audit_;
  std::map<std::string, size_t> omit_tail_;
  std::map<std::string, bool> serve_fork_;
  crypto::Digest running_hash_{};
};

// In-process directory client used by resolution.
class LocalDirectoryClient : public identity::DirectoryClient {
 public:
  explicit LocalDirectoryClient(const PlcDirectory& dir) : dir_(&dir) {}
  std::optional<std::vector<identity::PlcOperation>> fetch_audit_log(
      const std::string& did) override {
    return dir_->get_audit_log(did);
  }

 private:
  const PlcDirectory* dir_;
};

// JSON renderings with fixed field names (see docs/protocol.md); covered by
// golden-file tests.
std::string operation_to_json(const identity::PlcOperation& op);
std::optional<identity::PlcOperation> operation_from_json(const std::string& text);
std::string audit_log_to_json(const std::vector<identity::PlcOperation>& ops);
std::optional<std::vector<identity::PlcOperation>> audit_log_from_json(const std::string& text);

}  // namespace atproto::plc
