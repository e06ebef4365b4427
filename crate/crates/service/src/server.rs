//! Websocket transport. Each connection hosts one session, created when the
//! client sends `join`; the session is only touched from its connection's
//! task, so messages of one session are handled strictly in order.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;

use crate::config::ServiceConfig;
use crate::session::{start_session, Session};
use crate::wire::WireMessage;

pub fn router(config: ServiceConfig) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .with_state(Arc::new(config))
}

async fn upgrade(ws: WebSocketUpgrade, State(config): State<Arc<ServiceConfig>>) -> Response {
    ws.on_upgrade(move |socket| serve(socket, config))
}

async fn send_all(socket: &mut WebSocket, msgs: &[WireMessage]) -> bool {
    for msg in msgs {
        if socket.send(Message::Text(msg.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

fn reply(session: &mut Option<Session>, config: &ServiceConfig, text: &str) -> Vec<WireMessage> {
    if let Some(s) = session {
        return s.handle_text(text);
    }
    match WireMessage::parse(text) {
        Ok(msg @ WireMessage::Join(_)) => match start_session(config) {
            Ok(mut s) => {
                let replies = s.handle_client_message(msg);
                *session = Some(s);
                replies
            }
            Err(e) => vec![WireMessage::error(format!("{}: {e}", e.code()))],
        },
        Ok(_) => vec![WireMessage::error("join first")],
        Err(e) => vec![WireMessage::error(format!("malformed message: {e}"))],
    }
}

/// Agent moves go out one at a time, `agent_delay_ms` apart; client frames
/// arriving in between are answered at once, so an action sent while an
/// agent is to move is rejected as out of turn.
async fn serve(mut socket: WebSocket, config: Arc<ServiceConfig>) {
    let delay = Duration::from_millis(config.agent_delay_ms);
    let mut session: Option<Session> = None;
    loop {
        let agents_pending = session.as_ref().is_some_and(Session::agent_to_move);
        let frame = if agents_pending {
            tokio::select! {
                _ = tokio::time::sleep(delay) => {
                    let msgs = session.as_mut().and_then(Session::agent_step).unwrap_or_default();
                    if !send_all(&mut socket, &msgs).await {
                        return;
                    }
                    continue;
                }
                frame = socket.recv() => frame,
            }
        } else {
            socket.recv().await
        };
        let text = match frame {
            Some(Ok(Message::Text(t))) => t.to_string(),
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
            Some(Ok(_)) => continue,
        };
        let replies = reply(&mut session, &config, &text);
        if !send_all(&mut socket, &replies).await {
            return;
        }
    }
}
