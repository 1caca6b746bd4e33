// Default prompt texts and the structured-output instructions appended to them.
#pragma once

#include <string>
#include <string_view>

namespace ookb::prompts {

std::string_view fact_extraction();
std::string_view qa_generation();
std::string_view hyde_generation();
std::string_view system_basic();
std::string_view system_conservative();
std::string_view system_opinion_based();
std::string_view abstention_judge();
std::string_view factuality_judge();
std::string_view abbreviations();

std::string fact_extraction_format();
std::string qa_generation_format();
std::string hyde_format(int count);
std::string synthetic_query_system(int count);
std::string judge_format(std::string_view tag_name, std::string_view outcomes_csv);

}  // namespace ookb::prompts
