// SPDX-License-Identifier: Apache-2.0
#include "vicot/rs_toolset.hpp"

namespace vicot {
namespace {

json string_prop(const char* description) { return {{"type", "string"}, {"description", description}}; }
json int_prop(const char* description) { return {{"type", "integer"}, {"description", description}}; }

json schema(json properties, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(properties)}, {"required", std::move(required)}};
}

json region_schema() {
  return schema({{"image_path", string_prop("source image")},
                 {"x1", int_prop("left")},
                 {"y1", int_prop("top")},
                 {"x2", int_prop("right")},
                 {"y2", int_prop("bottom")}},
                {"image_path", "x1", "y1", "x2", "y2"});
}

json path_schema() { return schema({{"image_path", string_prop("source image")}}, {"image_path"}); }

}  // namespace

std::vector<ToolDescriptor> rs_tool_descriptors(const std::string& vision_server, const std::string& text_server) {
  using C = ToolCategory;
  return {
      {vision_server, "image_detection",
       "Open-vocabulary object detection. Finds targets named in a text prompt and returns labelled boxes "
       "with confidence scores and an annotated image.",
       schema({{"image_path", string_prop("source image")},
               {"txt_prompt", string_prop("categories separated by ' . '")}},
              {"image_path", "txt_prompt"}),
       C::vision},
      {vision_server, "image_crop", "Crop a single rectangular region out of the image for closer inspection.",
       region_schema(), C::vision},
      {vision_server, "image_binary",
       "Crop a region and apply binarization so that numbers, hull markings and text become readable.",
       region_schema(), C::vision},
      {vision_server, "image_super_resolution", "Upscale the image 4x to recover fine detail in small or blurred targets.",
       path_schema(), C::vision},
      {vision_server, "image_cloud_removal", "Remove cloud cover that hides ground targets.", path_schema(), C::vision},
      {vision_server, "image_rain_removal", "Remove rain streaks from the image.", path_schema(), C::vision},
      {vision_server, "image_denoise", "Suppress sensor noise in the image.", path_schema(), C::vision},
      {vision_server, "image_deblur", "Correct motion blur in the image.", path_schema(), C::vision},
      {text_server, "web_search", "Search the web with keywords for background information about identified targets.",
       schema({{"keywords", string_prop("search keywords")}}, {"keywords"}), C::text},
      {text_server, "rag_query",
       "Retrieve passages from the intelligence knowledge base that match the keywords.",
       schema({{"keywords", string_prop("retrieval keywords")}}, {"keywords"}), C::text},
  };
}

}  // namespace vicot
