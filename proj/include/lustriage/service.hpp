#pragma once

#include <memory>
#include <string>

#include "lustriage/store.hpp"

namespace httplib {
class Server;
}

namespace lustriage {

/// JSON HTTP API over a StudyStore. Reads take a shared lock on the study;
/// overrides and exports take the exclusive lock.
class TriageService {
 public:
  explicit TriageService(std::shared_ptr<StudyStore> store);
  ~TriageService();

  TriageService(const TriageService&) = delete;
  TriageService& operator=(const TriageService&) = delete;

  /// Binds and serves until stop(). Returns false when the bind fails.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it, or -1; call listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  void install_routes();

  std::shared_ptr<StudyStore> store_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace lustriage
