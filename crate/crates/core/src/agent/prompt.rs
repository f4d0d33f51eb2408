use crate::error::{Error, Result};
use crate::model::TaskInstance;

/// Fixed opening user message; the task itself lives in the system prompt.
pub const KICKOFF_MESSAGE: &str =
    "Please resolve the issue described above. Work in the repository with the tools provided, \
     and call finish once the change is complete.";

/// Sent after an assistant turn that contains no tool call.
pub const NUDGE_MESSAGE: &str =
    "Please continue working on the task by calling a tool, or call finish if the task is complete.";

/// Deterministic system prompt for an instance. Contains the problem
/// statement exactly once and no workspace paths or worked examples.
pub fn build_system_prompt(instance: &TaskInstance) -> Result<String> {
    if instance.problem_statement.trim().is_empty() {
        return Err(Error::Validation(format!(
            "instance {}: problem_statement is empty",
            instance.id
        )));
    }
    let mut prompt = String::new();
    prompt.push_str(
        "You are a software engineering agent working inside a checked-out code repository. \
         Your job is to change the repository so that the issue below is resolved.\n\n",
    );
    prompt.push_str("<issue>\n");
    prompt.push_str(&instance.problem_statement);
    if !instance.problem_statement.ends_with('\n') {
        prompt.push('\n');
    }
    prompt.push_str("</issue>\n\n");
    prompt.push_str(
        "Rules:\n\
         - Use the bash tool to explore the code and run commands. The shell starts at the \
         repository root; paths outside the repository are not accessible.\n\
         - Use the file_edit tool to view, create, and modify files.\n\
         - Make minimal changes to non-test source files. The hidden tests decide whether the \
         issue is resolved.\n\
         - Reproduce the problem first when possible, then fix it, then confirm the fix.\n\
         - Each reply should contain at least one tool call.\n\
         - When you are done, call the finish tool.\n",
    );
    Ok(prompt)
}
