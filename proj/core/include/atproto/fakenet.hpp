#pragma once

#include <map>
#include <vector>

#include "atproto/identity.hpp"

namespace atproto::net {

// Programmable DNS/HTTPS fake. Production deployments would plug a real
// resolver into identity::Network; every test and the simulator use this.
class FakeNet : public identity::Network {
 public:
  std::vector<std::string> dns_txt(const std::string& name) override {
    auto it = txt_.find(name);
    return it == txt_.end() ? std::vector<std::string>{} : it->second;
  }

  std::optional<std::string> https_get_text(const std::string& url) override {
    auto it = https_.find(url);
    if (it == https_.end()) return std::nullopt;
    return it->second;
  }

  void set_txt(const std::string& name, std::vector<std::string> values) {
    txt_[name] = std::move(values);
  }
  void add_txt(const std::string& name, const std::string& value) {
    txt_[name].push_back(value);
  }
  void clear_txt(const std::string& name) { txt_.erase(name); }

  void set_https(const std::string& url, std::string body) { https_[url] = std::move(body); }
  void clear_https(const std::string& url) { https_.erase(url); }

  // Registers the forward handle link the way a hosting provider that owns
  // the handle's DNS zone would.
  void publish_handle(const std::string& handle, const std::string& did) {
    set_txt("_atproto." + handle, {"did=" + did});
  }
  void unpublish_handle(const std::string& handle) { clear_txt("_atproto." + handle); }

 private:
  std::map<std::string, std::vector<std::string>> txt_;
  std::map<std::string, std::string> https_;
};

}  // namespace atproto::net
