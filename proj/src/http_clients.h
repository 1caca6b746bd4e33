#pragma once

#include <memory>

#include "ookb/gateway.h"

namespace ookb {

std::shared_ptr<LlmClient> make_openai_client(const ClientConfig& config);
std::shared_ptr<LlmClient> make_gemini_client(const ClientConfig& config);

}  // namespace ookb
