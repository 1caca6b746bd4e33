#include "ookb/prompts.h"

#include "ookb/assets.h"

namespace ookb::prompts {

std::string_view fact_extraction() { return assets::k_fact_extraction; }
std::string_view qa_generation() { return assets::k_qa_generation; }
std::string_view hyde_generation() { return assets::k_hyde_generation; }
std::string_view system_basic() { return assets::k_system_basic; }
std::string_view system_conservative() { return assets::k_system_conservative; }
std::string_view system_opinion_based() { return assets::k_system_opinion_based; }
std::string_view abstention_judge() { return assets::k_abstention_judge; }
std::string_view factuality_judge() { return assets::k_factuality_judge; }
std::string_view abbreviations() { return assets::k_abbreviations; }

std::string fact_extraction_format() {
  return "\n\nThe sentences are numbered. Respond only with a JSON object of the form "
         "{\"facts\": [{\"fact\": \"<self-contained statement>\", \"source\": <sentence number>}]}.";
}

std::string qa_generation_format() {
  return "\n\nRespond only with a JSON object of the form "
         "{\"question\": \"<question>\", \"answer\": \"<answer>\"}.";
}

std::string hyde_format(int count) {
  return "\n\nRespond only with a JSON object of the form {\"answers\": [\"<answer>\", ...]} "
         "containing exactly " + std::to_string(count) + " answers.";
}

std::string synthetic_query_system(int count) {
  return "You generate realistic questions that members of the public might ask a chatbot about "
         "the given topic. The questions do not need to be answerable from any particular "
         "document.\n\nRespond only with a JSON object of the form "
         "{\"questions\": [\"<question>\", ...]} containing exactly " + std::to_string(count) +
         " distinct questions.";
}

std::string judge_format(std::string_view tag_name, std::string_view outcomes_csv) {
  const std::string tag(tag_name);
  return "\n\nYou may reason step by step first. Then give your final decision inside <" + tag +
         "></" + tag + "> tags, using exactly one of: " + std::string(outcomes_csv) + ".";
}

}  // namespace ookb::prompts
