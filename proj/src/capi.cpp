#include "dpt/dpt.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "commands.hpp"
#include "errors.hpp"

#if defined(__GNUC__)
#define DPT_EXPORT __attribute__((visibility("default")))
#else
#define DPT_EXPORT
#endif

struct dpt_session {
  std::string last_error;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

DPT_EXPORT dpt_session* dpt_session_new(void) {
  return new (std::nothrow) dpt_session();
}

DPT_EXPORT void dpt_session_free(dpt_session* session) { delete session; }

DPT_EXPORT dpt_status dpt_run(dpt_session* session, const char* command, const char* args_json,
                              char** status_json_out) {
  if (status_json_out) *status_json_out = nullptr;
  if (!session) return DPT_ERR_INTERNAL;
  session->last_error.clear();
  if (!command) {
    session->last_error = "command must not be NULL";
    return DPT_ERR_CONFIG;
  }
  try {
    nlohmann::json args;
    try {
      args = nlohmann::json::parse(args_json ? args_json : "{}");
    } catch (const nlohmann::json::exception& e) {
      throw dpt::ConfigError(std::string("invalid args JSON: ") + e.what());
    }
    const nlohmann::json status = dpt::run_command(command, args);
    if (status_json_out) *status_json_out = dup_string(status.dump(1));
    return DPT_OK;
  } catch (const dpt::MissingArtifactError& e) {
    session->last_error = e.what();
    return DPT_ERR_MISSING_ARTIFACT;
  } catch (const dpt::NumericError& e) {
    session->last_error = e.what();
    return DPT_ERR_NUMERIC;
  } catch (const dpt::ConfigError& e) {
    session->last_error = e.what();
    return DPT_ERR_CONFIG;
  } catch (const dpt::InputError& e) {
    session->last_error = e.what();
    return DPT_ERR_CONFIG;
  } catch (const dpt::ParseError& e) {
    session->last_error = e.what();
    return DPT_ERR_CONFIG;
  } catch (const std::exception& e) {
    session->last_error = e.what();
    return DPT_ERR_INTERNAL;
  } catch (...) {
    session->last_error = "unknown error";
    return DPT_ERR_INTERNAL;
  }
}

DPT_EXPORT const char* dpt_last_error(const dpt_session* session) {
  return session ? session->last_error.c_str() : "";
}

DPT_EXPORT void dpt_free(char* ptr) { std::free(ptr); }

DPT_EXPORT const char* dpt_version(void) { return "1.0.0"; }

}  // extern "C"
