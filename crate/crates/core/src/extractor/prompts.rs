//! Prompt templates for the language-model backend.
//!
//! The templates are kept byte-for-byte; only the `{slot}` markers are filled.

pub const NER_TEMPLATE: &str = r#"Given entity label set: {label_set}.
Please name the entities in the given text. Based on the given entity label set, provide answer in the following JSON format: [{"Entity Name": "Entity Label"}]. If there is no entity in the text, return the following empty list: [].
Please note that entities have already been annotated with [], no need to extract and analyze other entities.
{cases}
Text: {query}
Answer:"#;

pub const OUTPUT_TEMPLATE: &str = r#"This instruction describes a step in an experimental process, which includes one action, multiple parameters, and one output. 
Please help analyze the output of this instruction. I will provide a list of potential outputs. You need to assist in determining which of these outputs is most suitable for this instruction. 
Note that you must choose one output from the list. Please output only a string without any explanation.

[Examples]
Instruction: {"action": "add", "reagent": ["glycoblue"], "output": ""}
Potential output list: "RNA", "mRNA"
Output: "RNA"

Instruction: {"action": "add", "concentration": ["1:10 volume 5 M NaCl"], "output": ""}
Potential output list: "a μMACS column", "solution"
Output: "solution"

Instruction: {"action": "heat", "reagent": ["limestone"], "output": ""}
Potential output list: "water", "NaCl"
Output: 

[Question]
Instruction: {Instruction}
Potential output list: {Input}
Output:"#;

pub const MISSING_REAGENTS_TEMPLATE: &str = r#"This instruction describes a step in an experimental process, which includes one action, multiple parameters-including various reagents-and one output.
Please help analyze the missing reagents of this instruction. I will provide a list of potential reagents. You need to help me analyze which of these reagents might be the ones omitted from the current instruction. 
Please note how many reagent parameters are missing from the current instruction. It is possible that some reagent parameters cannot be completed with the list provided. Please output only a comma-separated list of strings without any explanation.

[Examples]
Instruction: {"action": "add", "reagent": [""], "output": ""}
Potential reagent list: "RNA", "glycoblue"
Reagents: "glycoblue"

Instruction: {"action": "add", "concentration": ["1:10 volume"], "reagent": ["", ""], "output": ""}
Potential reagent list: "μMACS", "solution", "NaCl"
Reagents: "NaCl", "μMACS"

Instruction: {"action": "use", "reagent": ["BamHI", "XhoI", ""], "device": ["PCR amplification"], "output": ""}
Potential reagent list: "agar", "food"
Reagents:

[Question]
Instruction: {Instruction}
Potential reagent list: {Memory}
Reagents:"#;

/// Few-shot cases filled into the `{cases}` slot of the NER prompt.
pub const NER_CASES: &str = r#"Text: Add [35 mL] of [water] to the [flask].
Answer: [{"35 mL": "volume"}, {"water": "reagent"}, {"flask": "container"}]
Text: Heat the [mixture] to [70 °C] for [10 minutes].
Answer: [{"mixture": "reagent"}, {"70 °C": "temperature"}, {"10 minutes": "duration"}]
Text: Stir well.
Answer: []"#;

pub fn render_ner(label_set: &str, cases: &str, query: &str) -> String {
    fill(NER_TEMPLATE, &[("{label_set}", label_set), ("{cases}", cases), ("{query}", query)])
}

pub fn render_output(instruction: &str, candidates: &str) -> String {
    fill(OUTPUT_TEMPLATE, &[("{Instruction}", instruction), ("{Input}", candidates)])
}

pub fn render_missing_reagents(instruction: &str, memory: &str) -> String {
    fill(MISSING_REAGENTS_TEMPLATE, &[("{Instruction}", instruction), ("{Memory}", memory)])
}

/// `"a", "b"` as in the worked examples.
pub fn quote_list(items: &[String]) -> String {
    items.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", ")
}

/// Replace slot markers left to right; inserted text is never rescanned.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    loop {
        let next = slots.iter().filter_map(|(k, v)| rest.find(k).map(|i| (i, *k, *v))).min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, k, v)) => {
                out.push_str(&rest[..i]);
                out.push_str(v);
                rest = &rest[i + k.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}
